#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vclanc {

// Everything a training run needs besides the data itself.
struct RunConfig {
  std::size_t embedding_size = 32;  // J
  std::size_t hidden_size = 64;
  std::size_t pretrain_epochs = 200;     // T1
  std::size_t alternating_epochs = 100;  // T2
  std::size_t update_interval = 5;       // T: network epochs per block of 10
  double learning_rate = 0.002;
  double omega = 1.0;  // weight of the assignment-hardening loss
  double beta = 1.0;   // weight of the mutual-distance loss
  double alpha = 1.0;  // Student-t degrees of freedom
  std::size_t mc_samples = 1;  // L
  std::uint64_t seed = 0;
  std::size_t seeds = 1;  // repetitions, seeds seed .. seed + seeds - 1
  bool self_loops = true;
  std::size_t clusters = 0;  // K; 0 takes the dataset's class count

  // Experiment switches; defaults reproduce the reference configuration.
  double pos_weight = 1.0;        // weight on positive adjacency entries
  bool cah_on_samples = false;    // Student-t kernel on sampled Z instead of the mean
  bool mixture_prior = true;      // false: standard-normal prior throughout, GMM only at the end
  std::size_t checkpoint_every = 50;
  std::size_t block_rows = 64;    // decoder row-block size

  std::filesystem::path dataset;        // directory, see graph::load_dataset_dir
  std::filesystem::path edges;          // native files, used when dataset is empty
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path planetoid_dir;  // directory with one .content/.cites pair
  std::filesystem::path out;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Applies one `key = value` setting. Keys are the long CLI flag names without
// the leading dashes; '_' and '-' are interchangeable. Throws InputError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

// Range checks; throws InputError.
void validate(const RunConfig& cfg);

// Parses `key = value` lines (`#` starts a comment) over the defaults.
RunConfig parse_config_text(std::string_view text, const std::string& source = "<config>");
RunConfig parse_config_file(const std::filesystem::path& path);

// Canonical `key = value` rendering; parse_config_text(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);

}  // namespace vclanc
