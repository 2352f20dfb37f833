#include "vclanc/trainer.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "vclanc/errors.hpp"
#include "vclanc/text_io.hpp"

namespace vclanc::train {

using tensor::Tape;
using tensor::Var;

namespace {

constexpr int kCheckpointVersion = 1;

DenseMatrix standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

}  // namespace

const char* phase_name(Phase p) { return p == Phase::pretrain ? "pretrain" : "alternating"; }
const char* update_name(Update u) { return u == Update::network ? "network" : "prior"; }

Trainer::Trainer(const graph::AttributedGraph& g, const RunConfig& cfg, std::size_t clusters)
    : graph_(g), cfg_(cfg), k_(clusters) {
  validate(cfg_);
  if (k_ == 0) throw ContractError("Trainer: cluster count must be positive");
  if (g.n_nodes < k_) throw ContractError("Trainer: fewer nodes than clusters");
  adj_norm_ = graph::normalize_adjacency(g, cfg_.self_loops);
  features_t_ = g.features.transposed();
  state_.rng.seed(cfg_.seed);
  state_.params = model::ModelParams::glorot(g.n_nodes, g.n_attrs, cfg_.hidden_size, cfg_.embedding_size, state_.rng);
  state_.prior = gmm::MixturePrior::standard_normal(cfg_.embedding_size);
  const tensor::AdamConfig adam{cfg_.learning_rate};
  for (const auto* t : state_.params.tensors()) state_.network_opt.emplace_back(t->rows(), t->cols(), adam);
}

void Trainer::set_checkpoint(std::filesystem::path path, std::size_t every) {
  checkpoint_path_ = std::move(path);
  checkpoint_every_ = every;
}

EpochRecord Trainer::epoch(Phase phase, Update update) {
  const std::size_t n = graph_.n_nodes, m = graph_.n_attrs, j = cfg_.embedding_size;
  const bool net = update == Update::network;
  const bool pri = update == Update::prior;
  Tape tape;
  auto leaf = [&](const DenseMatrix& v, bool train) { return train ? tape.parameter(v) : tape.constant(v); };

  std::vector<Var> pv;
  for (const auto* t : state_.params.tensors()) pv.push_back(leaf(*t, net));
  Var prior_mean = leaf(state_.prior.mean, pri);
  Var prior_log_var = leaf(state_.prior.log_var, pri);
  Var pi_logits = leaf(state_.prior.pi_logits, pri);

  std::vector<DenseMatrix> node_noise, attr_noise;
  for (std::size_t s = 0; s < cfg_.mc_samples; ++s) {
    node_noise.push_back(standard_normal(n, j, state_.rng));
    attr_noise.push_back(standard_normal(m, j, state_.rng));
  }

  auto nv = model::gcn_encode(adj_norm_, graph_.features, pv[0], pv[1], node_noise[0]);
  auto av = model::mlp_encode(features_t_, pv[2], pv[3], pv[4], pv[5], attr_noise[0]);
  const DenseMatrix gamma = gmm::responsibilities(nv.mean.value(), state_.prior);

  losses::ElboInputs in;
  in.adjacency = &graph_.adjacency;
  in.features = &graph_.features;
  in.node_mean = nv.mean;
  in.node_log_var = nv.log_var;
  in.attr_mean = av.mean;
  in.attr_log_var = av.log_var;
  in.node_samples = {nv.sample};
  in.attr_samples = {av.sample};
  for (std::size_t s = 1; s < cfg_.mc_samples; ++s) {
    in.node_samples.push_back(model::reparameterize(nv.mean, nv.log_var, node_noise[s]));
    in.attr_samples.push_back(model::reparameterize(av.mean, av.log_var, attr_noise[s]));
  }
  in.prior_mean = prior_mean;
  in.prior_log_var = prior_log_var;
  in.pi_logits = pi_logits;
  in.gamma = &gamma;
  in.recon = {cfg_.pos_weight, cfg_.block_rows};
  const auto terms = losses::elbo(in);

  EpochRecord rec;
  rec.epoch = state_.epoch + 1;
  rec.phase = phase;
  rec.update = update;
  losses::LossReport& r = rec.report;
  r.recon_adj = terms.recon_adj.value()(0, 0);
  r.recon_attr = terms.recon_attr.value()(0, 0);
  r.kl_attr = terms.kl_attr.value()(0, 0);
  r.kl_node = terms.kl_node.value()(0, 0);
  r.kl_cat = terms.kl_cat.value()(0, 0);
  r.elbo = terms.elbo.value()(0, 0);

  Var total;
  if (phase == Phase::alternating && cfg_.mixture_prior) {
    Var zq = cfg_.cah_on_samples ? nv.sample : nv.mean;
    const DenseMatrix target =
        losses::target_distribution(losses::soft_assignment(zq.value(), state_.prior.mean, cfg_.alpha));
    Var cah = losses::cah_loss(zq, prior_mean, target, cfg_.alpha);
    Var md = losses::mutual_distance(prior_mean);
    total = losses::total_objective(terms.elbo, cah, md, cfg_.omega, cfg_.beta);
    r.cah = cah.value()(0, 0);
    r.mutual_distance = md.value()(0, 0);
  } else {
    total = tensor::scale(terms.elbo, -1.0);
  }
  r.total = total.value()(0, 0);

  const auto vals = r.values();
  for (std::size_t f = 0; f < vals.size(); ++f) {
    if (!std::isfinite(vals[f])) {
      throw NumericError("epoch " + std::to_string(rec.epoch) + " (" + phase_name(phase) + "): non-finite " +
                         std::string(losses::LossReport::kFields[f]));
    }
  }

  tape.backward(total);
  if (net) {
    auto ts = state_.params.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) tensor::adam_step(*ts[i], tape.grad(pv[i]), state_.network_opt[i]);
  }
  if (pri) {
    tensor::adam_step(state_.prior.mean, tape.grad(prior_mean), state_.prior_opt[0]);
    tensor::adam_step(state_.prior.log_var, tape.grad(prior_log_var), state_.prior_opt[1]);
    tensor::adam_step(state_.prior.pi_logits, tape.grad(pi_logits), state_.prior_opt[2]);
    state_.prior.enforce_variance_floor();
  }
  return rec;
}

void Trainer::after_epoch(const EpochRecord& rec) {
  state_.epoch = rec.epoch;
  state_.history.push_back(rec);
  if (hook_) hook_(state_, rec);
  if (checkpoint_every_ > 0 && !checkpoint_path_.empty() && rec.epoch % checkpoint_every_ == 0) {
    save_checkpoint({state_.epoch, state_.phase, state_.params, state_.prior, node_means()}, checkpoint_path_);
  }
}

void Trainer::pretrain(std::size_t epochs) {
  if (state_.phase != Phase::pretrain) throw ContractError("pretrain: priors already initialized");
  for (std::size_t e = 0; e < epochs; ++e) after_epoch(epoch(Phase::pretrain, Update::network));
}

void Trainer::init_priors() {
  if (state_.phase != Phase::pretrain) throw ContractError("init_priors: called twice");
  const std::uint64_t em_seed = state_.rng();
  state_.em = gmm::em_fit(node_means(), k_, em_seed);
  state_.prior = state_.em.prior;
  state_.prior.enforce_variance_floor();
  const tensor::AdamConfig adam{cfg_.learning_rate};
  state_.prior_opt.clear();
  state_.prior_opt.emplace_back(k_, cfg_.embedding_size, adam);
  state_.prior_opt.emplace_back(k_, cfg_.embedding_size, adam);
  state_.prior_opt.emplace_back(1, k_, adam);
  state_.phase = Phase::alternating;
}

void Trainer::alternating_train(std::size_t epochs, std::size_t interval) {
  if (state_.phase != Phase::alternating) throw ContractError("alternating_train: priors not initialized");
  if (interval > 10) throw ContractError("alternating_train: interval must be at most 10");
  for (std::size_t e = 1; e <= epochs; ++e) {
    const Update u = e % 10 < interval ? Update::network : Update::prior;
    after_epoch(epoch(Phase::alternating, u));
  }
}

void Trainer::finish() {
  if (!checkpoint_path_.empty()) {
    save_checkpoint({state_.epoch, state_.phase, state_.params, state_.prior, node_means()}, checkpoint_path_);
  }
}

DenseMatrix Trainer::node_means() const {
  const DenseMatrix zero(graph_.n_nodes, cfg_.embedding_size);
  return model::gcn_encode(adj_norm_, graph_.features, state_.params.node, zero).mean;
}

DenseMatrix Trainer::attr_means() const {
  const DenseMatrix zero(graph_.n_attrs, cfg_.embedding_size);
  return model::mlp_encode(features_t_, state_.params.attr, zero).mean;
}

ClusteringResult Trainer::assign_clusters() const {
  if (state_.prior.k() != k_) throw ContractError("assign_clusters: priors not initialized");
  ClusteringResult r;
  r.node_mean = node_means();
  r.responsibilities = gmm::responsibilities(r.node_mean, state_.prior);
  r.assignment = argmax_rows(r.responsibilities);
  return r;
}

ClusteringResult Trainer::run() {
  pretrain(cfg_.pretrain_epochs);
  if (cfg_.mixture_prior) {
    init_priors();
    alternating_train(cfg_.alternating_epochs, cfg_.update_interval);
  } else {
    // Standard-normal prior throughout; the mixture is only fitted to read off clusters.
    pretrain(cfg_.alternating_epochs);
    init_priors();
  }
  finish();
  return assign_clusters();
}

std::vector<int> argmax_rows(const DenseMatrix& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c)
      if (m(i, c) > m(i, best)) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

namespace {

void render_tensor(std::string& out, std::string_view name, const DenseMatrix& t) {
  out += "tensor\t";
  out += name;
  out += "\t" + std::to_string(t.rows()) + "\t" + std::to_string(t.cols()) + "\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) out += '\t';
      out += io::format_double(t(r, c));
    }
    out += '\n';
  }
}

}  // namespace

std::string render_checkpoint(const Checkpoint& c) {
  std::string out = "#vclanc-checkpoint\t" + std::to_string(kCheckpointVersion) + "\n";
  out += "#epoch\t" + std::to_string(c.epoch) + "\n";
  out += std::string("#phase\t") + phase_name(c.phase) + "\n";
  const auto ts = c.params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) render_tensor(out, model::ModelParams::kNames[i], *ts[i]);
  render_tensor(out, "prior_mean", c.prior.mean);
  render_tensor(out, "prior_log_var", c.prior.log_var);
  render_tensor(out, "prior_pi_logits", c.prior.pi_logits);
  render_tensor(out, "node_mean", c.node_mean);
  return out;
}

Checkpoint parse_checkpoint(std::string_view text, const std::string& source) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  auto where = [&](std::size_t ln) { return source + ":" + std::to_string(ln + 1); };
  std::size_t ln = 0;
  auto header = [&](std::string_view key) {
    if (ln >= lines.size()) throw InputError(source + ": truncated header");
    const auto f = io::split_ws(lines[ln]);
    if (f.size() != 2 || f[0] != key) throw InputError(where(ln) + ": expected " + std::string(key));
    return std::string(f[1]);
  };
  if (header("#vclanc-checkpoint") != std::to_string(kCheckpointVersion)) {
    throw InputError(where(ln) + ": unsupported checkpoint version");
  }
  ++ln;
  Checkpoint c;
  c.epoch = static_cast<std::size_t>(io::parse_int(header("#epoch"), where(ln)));
  ++ln;
  const std::string phase = header("#phase");
  if (phase == "pretrain") c.phase = Phase::pretrain;
  else if (phase == "alternating") c.phase = Phase::alternating;
  else throw InputError(where(ln) + ": unknown phase '" + phase + "'");
  ++ln;

  std::map<std::string, DenseMatrix, std::less<>> tensors;
  while (ln < lines.size()) {
    if (io::trim(lines[ln]).empty()) {
      ++ln;
      continue;
    }
    const auto f = io::split_ws(lines[ln]);
    if (f.size() != 4 || f[0] != "tensor") throw InputError(where(ln) + ": expected tensor header");
    const std::string name(f[1]);
    const auto rows = io::parse_int(f[2], where(ln)), cols = io::parse_int(f[3], where(ln));
    if (rows < 0 || cols < 0) throw InputError(where(ln) + ": negative shape");
    if (tensors.count(name)) throw InputError(where(ln) + ": duplicate tensor " + name);
    ++ln;
    DenseMatrix t(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (std::size_t r = 0; r < t.rows(); ++r, ++ln) {
      if (ln >= lines.size()) throw InputError(source + ": truncated tensor " + name);
      const auto v = io::split_ws(lines[ln]);
      if (v.size() != t.cols()) throw InputError(where(ln) + ": expected " + std::to_string(t.cols()) + " values");
      for (std::size_t col = 0; col < t.cols(); ++col) t(r, col) = io::parse_double(v[col], where(ln));
    }
    tensors.emplace(name, std::move(t));
  }
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InputError(source + ": missing tensor " + name);
    return it->second;
  };
  auto ts = c.params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = take(std::string(model::ModelParams::kNames[i]));
  c.prior.mean = take("prior_mean");
  c.prior.log_var = take("prior_log_var");
  c.prior.pi_logits = take("prior_pi_logits");
  c.node_mean = take("node_mean");

  const auto& p = c.params;
  const std::size_t h = p.node.input_weight.cols(), j2 = p.node.output_weight.cols();
  const bool ok = p.node.output_weight.rows() == h && j2 % 2 == 0 && p.attr.input_weight.cols() == h &&
                  p.attr.input_bias.rows() == 1 && p.attr.input_bias.cols() == h &&
                  p.attr.output_weight.rows() == h && p.attr.output_weight.cols() == j2 &&
                  p.attr.output_bias.rows() == 1 && p.attr.output_bias.cols() == j2 &&
                  c.prior.mean.cols() == j2 / 2 && c.prior.log_var.rows() == c.prior.mean.rows() &&
                  c.prior.log_var.cols() == j2 / 2 && c.prior.pi_logits.rows() == 1 &&
                  c.prior.pi_logits.cols() == c.prior.mean.rows() && c.node_mean.cols() == j2 / 2 &&
                  c.node_mean.rows() == p.attr.input_weight.rows();
  if (!ok) throw InputError(source + ": inconsistent tensor shapes");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_file(path, render_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path), path.string());
}

std::string render_loss_log(const std::vector<EpochRecord>& history) {
  std::string out = "epoch\tphase\tupdate";
  for (auto f : losses::LossReport::kFields) {
    out += '\t';
    out += f;
  }
  out += '\n';
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "\t" + phase_name(r.phase) + "\t" + update_name(r.update);
    for (double v : r.report.values()) out += "\t" + io::format_double(v);
    out += '\n';
  }
  return out;
}

}  // namespace vclanc::train
