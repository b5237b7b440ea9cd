#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protofed/data.hpp"
#include "protofed/losses.hpp"
#include "protofed/metrics.hpp"
#include "protofed/model.hpp"
#include "protofed/prototypes.hpp"
#include "protofed/transport.hpp"

namespace protofed {

enum class OptimizerKind { sgd, adam };
enum class SecondTerm { none, l2, contrastive };
enum class FedMode { fedhpb, fedavg };

OptimizerKind optimizer_from_string(const std::string& name);
SecondTerm second_term_from_string(const std::string& name);
FedMode fed_mode_from_string(const std::string& name);
std::string to_string(OptimizerKind k);
std::string to_string(SecondTerm t);
std::string to_string(FedMode m);

struct RoundConfig {
  std::size_t rounds = 20;       // R
  std::size_t epochs = 100;      // E, local epochs per round
  std::size_t batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.01;
  double momentum = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossConfig loss;               // lambda 0.25, tau 0.5, gamma 2
  SecondTerm second_term = SecondTerm::contrastive;
  Aggregation aggregation = Aggregation::normalized;
  bool clip_lstm = true;         // gradient-norm clip on the LSTM parameters
  double clip_norm = 5.0;
  std::size_t eval_batch = 256;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ClientState {
  std::uint32_t id = 0;
  ClientDataset data;
  LcnnModel model;
  ClassCounts counts;   // full-training-set counts, frozen at construction
  Rng order_rng;        // batch shuffling stream

  // Test hook: the next `fail_attempts` local updates throw SessionError.
  int fail_attempts = 0;

  // Filled by the most recent local update (read by the driver after the
  // round barrier).
  double last_loss = 0.0;
  bool last_suppressed = false;
  double last_wall_ms = 0.0;

  ClientState(std::uint32_t id_, ClientDataset data_, const LcnnConfig& model_cfg,
              std::uint64_t experiment_seed);
};

/// Builds one ClientState per dataset with per-client derived seeds.
std::vector<ClientState> make_clients(std::vector<ClientDataset> datasets,
                                      const LcnnConfig& model_cfg,
                                      std::uint64_t seed);

struct LocalUpdateResult {
  PrototypeSet prototypes;  // running mean over the final local epoch
  double mean_loss = 0.0;   // mean batch loss over the whole round
  bool lambda_suppressed = false;
};

/// One LocalUpdate: E epochs of mini-batch training on the combined loss,
/// then the finalized prototype set. When the client lacks a class or the
/// global targets are unusable, the second term is dropped (lambda acts
/// as 0) and the result is flagged.
LocalUpdateResult local_update(ClientState& client, const PrototypeSet& global,
                               const RoundConfig& cfg);

struct RoundClientRecord {
  std::uint32_t round = 0;
  std::uint32_t client = 0;
  double train_loss = 0.0;
  bool lambda_suppressed = false;
  bool excluded = false;  // failed twice; left out of this round's aggregation
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  double wall_ms = 0.0;
  ConfusionCounts confusion;
  double precision = 0.0, recall = 0.0, fbeta = 0.0, ba = 0.0;
};

struct RoundSummary {
  std::uint32_t round = 0;
  double mean_train_loss = 0.0;
  double mfbeta = 0.0;
  double mba = 0.0;
  PrototypeSet global;  // post-aggregation snapshot (empty in fedavg mode)
};

struct TrainReport {
  FedMode mode = FedMode::fedhpb;
  std::size_t client_count = 0;
  std::size_t rounds_requested = 0;
  std::vector<RoundClientRecord> records;
  std::vector<RoundSummary> rounds;
  double avg_mfbeta = 0.0;  // mean over rounds of the per-round macro means
  double avg_mba = 0.0;
  std::uint64_t upload_data_bytes = 0;
  std::uint64_t download_data_bytes = 0;
  std::uint64_t control_bytes = 0;
  double wall_seconds = 0.0;

  /// round,client,tp,tn,fp,fn,precision,recall,fbeta,ba rows plus per-round
  /// and overall mean rows.
  std::string metrics_csv() const;
  /// round,mean_train_loss,mfbeta,mba per round.
  std::string trajectory_csv() const;
  std::string to_json() const;
  /// Carrier-comparison form: timing and control-frame byte counts removed.
  std::string stable_json() const;
};

enum class CarrierKind { inproc, tcp };

struct RunOptions {
  CarrierKind carrier = CarrierKind::inproc;
  /// Worker thread per client instead of inline sequential servicing.
  /// The tcp carrier always runs client threads.
  bool parallel_clients = false;
  std::uint16_t tcp_port = 0;  // 0 picks an ephemeral port
};

/// Full prototype-exchange experiment (Algorithm 1 driver).
TrainReport server_run(std::vector<ClientState>& clients, const RoundConfig& cfg,
                       const RunOptions& options = {});

/// Parameter-averaging baseline over the same carrier and report shape.
TrainReport fedavg_run(std::vector<ClientState>& clients, const RoundConfig& cfg,
                       const RunOptions& options = {});

/// Batched eval-mode metrics of a model over a window list.
RoundClientRecord evaluate_model(LcnnModel& model,
                                 const std::vector<WindowSample>& test,
                                 std::size_t eval_batch);

/// Dataset-size-weighted mean of flat parameter vectors (the fedavg
/// aggregation rule). All vectors must have equal length.
std::vector<double> weighted_param_mean(
    const std::vector<std::pair<std::uint64_t, std::vector<double>>>& uploads);

}  // namespace protofed
