#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lud/corpus.hpp"
#include "lud/identify.hpp"

namespace lud {

// Out-of-band label marker excluding a position from the loss. Never a valid
// token id (ids are non-negative).
inline constexpr std::int32_t kIgnoreLabel = -1;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int n_layers = 4;
  int d_model = 128;
  int n_heads = 4;
  int max_seq_len = 256;
  int vocab_size = 0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Model-ready (input, label) pair. label_ids[j] is the target for the
// prediction made at input position j; kIgnoreLabel excludes a position.
struct TrainingBatchItem {
  std::vector<TokenId> input_ids;
  std::vector<std::int32_t> label_ids;

  // Validates equal lengths, at least one supervised position, and labels
  // that are either kIgnoreLabel or non-negative token ids.
  static TrainingBatchItem create(std::vector<TokenId> input_ids,
                                  std::vector<std::int32_t> label_ids);
};

// Standard auto-regressive instance: input [BOS]+prompt+target[:-1], labels
// IGNORE over the prompt region and the target tokens elsewhere.
TrainingBatchItem make_ar_instance(const TokenizedItem& item, const Vocabulary& vocab);

struct ParamView {
  std::string name;
  double* data;
  std::ptrdiff_t size;
};

// Decoder-only causal transformer: learned absolute position embeddings,
// pre-RMSNorm blocks, multi-head attention, GELU MLP, untied output head.
// The PAD embedding row is an ordinary trainable row.
class CausalLM {
 public:
  explicit CausalLM(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // T x vocab_size row-stochastic matrix; row j is the next-token
  // distribution after input position j. Throws if T > max_seq_len.
  Matrix forward(std::span<const TokenId> input_ids) const;

  std::vector<ParamView> parameter_views();
  std::vector<ParamView> parameter_views() const;  // views are read-only by convention

 private:
  friend struct ModelOps;

  struct Layer {
    Vector ln1_gain, ln2_gain;
    Matrix wq, wk, wv, wo, w_mlp_in, w_mlp_out;
  };

  ModelConfig config_;
  Matrix tok_emb_;  // vocab_size x d_model
  Matrix pos_emb_;  // max_seq_len x d_model
  std::vector<Layer> layers_;
  Vector lnf_gain_;
  Matrix w_out_;  // d_model x vocab_size
};

struct TrainOptions {
  int epochs = 1;
  double lr = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

// Adam over shuffled minibatches; deterministic in opts.seed. Returns the
// per-epoch mean cross-entropy (per supervised token). Throws on NaN loss.
std::vector<double> train(CausalLM& model, const std::vector<TrainingBatchItem>& instances,
                          const TrainOptions& opts);

// Mean cross-entropy over all supervised positions (forward only).
double training_loss(const CausalLM& model, const std::vector<TrainingBatchItem>& instances);

// Loss plus analytic gradients, one flat buffer per parameter tensor in
// parameter_views() order. Exposed for the optimizer and gradient checks.
double loss_and_gradients(const CausalLM& model,
                          const std::vector<TrainingBatchItem>& instances,
                          std::vector<std::vector<double>>& grads);

// P(target[i] | BOS, prompt, target[<i]) for every target position.
ProbabilityTrace teacher_forced_probs(const CausalLM& model, const TokenizedItem& item,
                                      const Vocabulary& vocab);

// Bit-exact parameter round trip with the config embedded in a header.
void save_checkpoint(const CausalLM& model, const std::filesystem::path& path);
CausalLM load_checkpoint(const std::filesystem::path& path);

}  // namespace lud
