#include "vclanc/config.hpp"

#include <algorithm>
#include <sstream>

#include "vclanc/errors.hpp"
#include "vclanc/text_io.hpp"

namespace vclanc {

namespace {

std::size_t to_count(std::string_view v, const std::string& key) {
  const auto x = io::parse_int(io::trim(v), key);
  if (x < 0) throw InputError(key + ": must be non-negative");
  return static_cast<std::size_t>(x);
}

bool to_bool(std::string_view v, const std::string& key) {
  v = io::trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError(key + ": expected a boolean, got '" + std::string(v) + "'");
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view raw_key, std::string_view value) {
  std::string key(io::trim(raw_key));
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string v(io::trim(value));
  if (key == "j") cfg.embedding_size = to_count(v, key);
  else if (key == "hidden") cfg.hidden_size = to_count(v, key);
  else if (key == "t1") cfg.pretrain_epochs = to_count(v, key);
  else if (key == "t2") cfg.alternating_epochs = to_count(v, key);
  else if (key == "interval") cfg.update_interval = to_count(v, key);
  else if (key == "lr") cfg.learning_rate = io::parse_double(v, key);
  else if (key == "omega") cfg.omega = io::parse_double(v, key);
  else if (key == "beta") cfg.beta = io::parse_double(v, key);
  else if (key == "alpha") cfg.alpha = io::parse_double(v, key);
  else if (key == "mc-samples") cfg.mc_samples = to_count(v, key);
  else if (key == "seed") cfg.seed = to_count(v, key);
  else if (key == "seeds") cfg.seeds = to_count(v, key);
  else if (key == "self-loops") cfg.self_loops = to_bool(v, key);
  else if (key == "no-self-loops") cfg.self_loops = !to_bool(v, key);
  else if (key == "k") cfg.clusters = to_count(v, key);
  else if (key == "pos-weight") cfg.pos_weight = io::parse_double(v, key);
  else if (key == "cah-on-samples") cfg.cah_on_samples = to_bool(v, key);
  else if (key == "mixture-prior") cfg.mixture_prior = to_bool(v, key);
  else if (key == "no-mixture-prior") cfg.mixture_prior = !to_bool(v, key);
  else if (key == "checkpoint-every") cfg.checkpoint_every = to_count(v, key);
  else if (key == "block-rows") cfg.block_rows = to_count(v, key);
  else if (key == "dataset") cfg.dataset = v;
  else if (key == "edges") cfg.edges = v;
  else if (key == "features") cfg.features = v;
  else if (key == "labels") cfg.labels = v;
  else if (key == "planetoid-dir") cfg.planetoid_dir = v;
  else if (key == "out") cfg.out = v;
  else throw InputError("unknown config key '" + std::string(raw_key) + "'");
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw InputError("invalid config: " + m); };
  if (c.embedding_size < 2) fail("j must be >= 2");
  if (c.hidden_size < 1) fail("hidden must be >= 1");
  if (c.update_interval > 10) fail("interval must be in [0, 10]");
  if (!(c.learning_rate > 0)) fail("lr must be > 0");
  if (!(c.alpha > 0)) fail("alpha must be > 0");
  if (!(c.omega >= 0)) fail("omega must be >= 0");
  if (!(c.beta >= 0)) fail("beta must be >= 0");
  if (!(c.pos_weight > 0)) fail("pos-weight must be > 0");
  if (c.mc_samples < 1) fail("mc-samples must be >= 1");
  if (c.seeds < 1) fail("seeds must be >= 1");
  if (c.clusters == 1) fail("k must be >= 2");
  if (c.block_rows < 1) fail("block-rows must be >= 1");
}

RunConfig parse_config_text(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = io::trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    apply_setting(cfg, l.substr(0, eq), l.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  return parse_config_text(io::read_file(path), path.string());
}

std::string render_config(const RunConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "j = " << c.embedding_size << '\n'
    << "hidden = " << c.hidden_size << '\n'
    << "t1 = " << c.pretrain_epochs << '\n'
    << "t2 = " << c.alternating_epochs << '\n'
    << "interval = " << c.update_interval << '\n'
    << "lr = " << io::format_double(c.learning_rate) << '\n'
    << "omega = " << io::format_double(c.omega) << '\n'
    << "beta = " << io::format_double(c.beta) << '\n'
    << "alpha = " << io::format_double(c.alpha) << '\n'
    << "mc-samples = " << c.mc_samples << '\n'
    << "seed = " << c.seed << '\n'
    << "seeds = " << c.seeds << '\n'
    << "self-loops = " << b(c.self_loops) << '\n'
    << "k = " << c.clusters << '\n'
    << "pos-weight = " << io::format_double(c.pos_weight) << '\n'
    << "cah-on-samples = " << b(c.cah_on_samples) << '\n'
    << "mixture-prior = " << b(c.mixture_prior) << '\n'
    << "checkpoint-every = " << c.checkpoint_every << '\n'
    << "block-rows = " << c.block_rows << '\n';
  auto p = [&](const char* k, const std::filesystem::path& v) {
    if (!v.empty()) o << k << " = " << v.string() << '\n';
  };
  p("dataset", c.dataset);
  p("edges", c.edges);
  p("features", c.features);
  p("labels", c.labels);
  p("planetoid-dir", c.planetoid_dir);
  p("out", c.out);
  return o.str();
}

}  // namespace vclanc
