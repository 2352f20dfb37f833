#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vclanc/adam.hpp"
#include "vclanc/config.hpp"
#include "vclanc/gmm.hpp"
#include "vclanc/graph.hpp"
#include "vclanc/losses.hpp"
#include "vclanc/model.hpp"

namespace vclanc::train {

using tensor::DenseMatrix;

enum class Phase { pretrain, alternating };
enum class Update { network, prior };

const char* phase_name(Phase p);
const char* update_name(Update u);

struct EpochRecord {
  std::size_t epoch = 0;  // global, 1-based
  Phase phase = Phase::pretrain;
  Update update = Update::network;
  losses::LossReport report;
};

struct TrainState {
  std::size_t epoch = 0;
  Phase phase = Phase::pretrain;
  model::ModelParams params;
  gmm::MixturePrior prior;
  std::vector<tensor::AdamState> network_opt;  // one per ModelParams tensor
  std::vector<tensor::AdamState> prior_opt;    // mean, log_var, pi_logits
  std::mt19937_64 rng;
  std::vector<EpochRecord> history;
  gmm::EmResult em;  // from init_priors
};

struct ClusteringResult {
  std::vector<int> assignment;
  DenseMatrix responsibilities;  // N x K
  DenseMatrix node_mean;         // N x J
};

// Called after every epoch with the updated state.
using EpochHook = std::function<void(const TrainState&, const EpochRecord&)>;

// Runs the training schedule on one graph. The graph must outlive the trainer.
class Trainer {
 public:
  Trainer(const graph::AttributedGraph& g, const RunConfig& cfg, std::size_t clusters);

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  const RunConfig& config() const { return cfg_; }
  std::size_t clusters() const { return k_; }

  void set_epoch_hook(EpochHook hook) { hook_ = std::move(hook); }
  // Writes a checkpoint every `every` epochs (0 disables) and at finish().
  void set_checkpoint(std::filesystem::path path, std::size_t every);

  // Minimizes -elbo against a single standard-normal prior.
  void pretrain(std::size_t epochs);
  // EM on the current node means; switches to the alternating phase.
  void init_priors();
  // For the e-th alternating epoch (1-based) the network is updated when
  // e % 10 < interval, otherwise the prior.
  void alternating_train(std::size_t epochs, std::size_t interval);
  // Writes the final checkpoint if one is configured.
  void finish();

  DenseMatrix node_means() const;
  DenseMatrix attr_means() const;
  ClusteringResult assign_clusters() const;

  // Full schedule from the config.
  ClusteringResult run();

 private:
  EpochRecord epoch(Phase phase, Update update);
  void after_epoch(const EpochRecord& rec);

  const graph::AttributedGraph& graph_;
  RunConfig cfg_;
  std::size_t k_;
  tensor::SparseCSR adj_norm_;
  tensor::SparseCSR features_t_;
  TrainState state_;
  EpochHook hook_;
  std::filesystem::path checkpoint_path_;
  std::size_t checkpoint_every_ = 0;
};

// Argmax of each row; ties go to the lowest column.
std::vector<int> argmax_rows(const DenseMatrix& m);

// Checkpoint: a versioned TSV holding every parameter tensor, the prior and
// the node means.
//   #vclanc-checkpoint<TAB>1
//   #epoch<TAB>E
//   #phase<TAB>pretrain|alternating
//   tensor<TAB>name<TAB>rows<TAB>cols   followed by `rows` lines of `cols` values
struct Checkpoint {
  std::size_t epoch = 0;
  Phase phase = Phase::pretrain;
  model::ModelParams params;
  gmm::MixturePrior prior;
  DenseMatrix node_mean;
};

std::string render_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(std::string_view text, const std::string& source = "<checkpoint>");
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loss log: header line then one row per epoch:
//   epoch phase update recon_adj ... total
std::string render_loss_log(const std::vector<EpochRecord>& history);

}  // namespace vclanc::train
