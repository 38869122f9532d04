#include "lud/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "lud/util.hpp"

namespace lud {
namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr char kCheckpointMagic[8] = {'L', 'U', 'D', 'C', 'K', 'P', 'T', '1'};

// Uniform draw in (0,1), built from the top 53 bits of the engine output so
// the value stream is pinned to mt19937_64 alone.
double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Box-Muller, one variate per call (the sine partner is discarded to keep
// draw accounting independent of call sites).
double gaussian(std::mt19937_64& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void fill_gaussian(Matrix& m, double stddev, std::mt19937_64& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stddev * gaussian(rng);
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// y_t = (x_t * r_t) .* gain with r_t = (mean(x_t^2) + eps)^-1/2
void rmsnorm_forward(const Matrix& x, const Vector& gain, Matrix& y, Vector& r) {
  const Eigen::Index t_len = x.rows();
  const double d = static_cast<double>(x.cols());
  y.resize(t_len, x.cols());
  r.resize(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    r(t) = 1.0 / std::sqrt(x.row(t).squaredNorm() / d + kRmsEps);
    y.row(t) = (x.row(t) * r(t)).cwiseProduct(gain.transpose());
  }
}

// dx_t = r_t * u_t - (r_t^3 / d) * (u_t . x_t) * x_t   with u_t = dy_t .* gain
// dgain += sum_t dy_t .* x_t * r_t
void rmsnorm_backward(const Matrix& x, const Vector& gain, const Vector& r, const Matrix& dy,
                      Vector& dgain, Matrix& dx) {
  const Eigen::Index t_len = x.rows();
  const double d = static_cast<double>(x.cols());
  dx.resize(t_len, x.cols());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto u = dy.row(t).cwiseProduct(gain.transpose());
    dgain += (dy.row(t).cwiseProduct(x.row(t)) * r(t)).transpose();
    const double proj = u.cwiseProduct(x.row(t)).sum();
    dx.row(t) = r(t) * u - (r(t) * r(t) * r(t) / d) * proj * x.row(t);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("model config: n_layers must be >= 1");
  if (d_model < 1) throw std::invalid_argument("model config: d_model must be >= 1");
  if (n_heads < 1) throw std::invalid_argument("model config: n_heads must be >= 1");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (max_seq_len < 1) throw std::invalid_argument("model config: max_seq_len must be >= 1");
  if (vocab_size < static_cast<int>(Vocabulary::kNumSpecial) + 1)
    throw std::invalid_argument("model config: vocab_size must cover the special tokens "
                                "plus at least one symbol");
}

TrainingBatchItem TrainingBatchItem::create(std::vector<TokenId> input_ids,
                                            std::vector<std::int32_t> label_ids) {
  if (input_ids.empty()) throw std::invalid_argument("training item: empty input");
  if (input_ids.size() != label_ids.size())
    throw std::invalid_argument("training item: input length " +
                                std::to_string(input_ids.size()) + " != label length " +
                                std::to_string(label_ids.size()));
  std::size_t supervised = 0;
  for (std::size_t j = 0; j < label_ids.size(); ++j) {
    if (input_ids[j] < 0)
      throw std::invalid_argument("training item: negative token id at position " +
                                  std::to_string(j));
    if (label_ids[j] == kIgnoreLabel) continue;
    if (label_ids[j] < 0)
      throw std::invalid_argument("training item: invalid label at position " +
                                  std::to_string(j));
    ++supervised;
  }
  if (supervised == 0)
    throw std::invalid_argument("training item: every position is excluded from the loss");
  return TrainingBatchItem{std::move(input_ids), std::move(label_ids)};
}

TrainingBatchItem make_ar_instance(const TokenizedItem& item, const Vocabulary& vocab) {
  if (item.target_ids.empty())
    throw std::invalid_argument("make_ar_instance: item " + item.item_id + " has empty target");
  const std::size_t p = item.prompt_ids.size();
  const std::size_t n = item.target_ids.size();
  std::vector<TokenId> input;
  input.reserve(p + n);
  input.push_back(Vocabulary::kBosId);
  input.insert(input.end(), item.prompt_ids.begin(), item.prompt_ids.end());
  input.insert(input.end(), item.target_ids.begin(), item.target_ids.end() - 1);
  std::vector<std::int32_t> labels(input.size(), kIgnoreLabel);
  for (std::size_t i = 0; i < n; ++i) labels[p + i] = item.target_ids[i];
  (void)vocab;
  return TrainingBatchItem::create(std::move(input), std::move(labels));
}

// ---------------------------------------------------------------------------
// Forward / backward internals. All heavy math lives here; the public class
// only stores parameters.

struct ModelOps {
  struct LayerScratch {
    Matrix attn_in;              // block input, T x d
    Matrix a;                    // rmsnorm(attn_in)
    Vector r1;
    Matrix q, k, v;              // T x d
    std::vector<Matrix> attn_p;  // per head, T x T causal row-stochastic
    Matrix attn_concat;          // heads concatenated, pre-output-projection
    Matrix mlp_in;               // after attention residual
    Matrix b;                    // rmsnorm(mlp_in)
    Vector r2;
    Matrix h_pre, h_act;         // T x 4d
  };

  struct Scratch {
    std::vector<LayerScratch> layers;
    Matrix x_final;  // after the last residual
    Matrix f;        // final rmsnorm output
    Vector rf;
    Matrix probs;    // T x V
  };

  // Gradient accumulator shaped exactly like the model parameters. Member
  // names mirror CausalLM so visit_tensors applies to both.
  struct GradAccum {
    Matrix tok_emb_, pos_emb_;
    std::vector<CausalLM::Layer> layers_;
    Vector lnf_gain_;
    Matrix w_out_;
  };

  // Single source of truth for parameter ordering: checkpoints, views,
  // optimizer state, and gradient flattening all walk this order.
  template <class ModelLike, class Fn>
  static void visit_tensors(ModelLike& m, Fn&& fn) {
    fn("tok_emb", m.tok_emb_);
    fn("pos_emb", m.pos_emb_);
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      auto& lay = m.layers_[l];
      const std::string prefix = "layers." + std::to_string(l) + ".";
      fn(prefix + "ln1_gain", lay.ln1_gain);
      fn(prefix + "wq", lay.wq);
      fn(prefix + "wk", lay.wk);
      fn(prefix + "wv", lay.wv);
      fn(prefix + "wo", lay.wo);
      fn(prefix + "ln2_gain", lay.ln2_gain);
      fn(prefix + "w_mlp_in", lay.w_mlp_in);
      fn(prefix + "w_mlp_out", lay.w_mlp_out);
    }
    fn("lnf_gain", m.lnf_gain_);
    fn("w_out", m.w_out_);
  }

  static GradAccum zero_like(const CausalLM& m) {
    GradAccum g;
    g.tok_emb_ = Matrix::Zero(m.tok_emb_.rows(), m.tok_emb_.cols());
    g.pos_emb_ = Matrix::Zero(m.pos_emb_.rows(), m.pos_emb_.cols());
    g.layers_.resize(m.layers_.size());
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      const auto& src = m.layers_[l];
      auto& dst = g.layers_[l];
      dst.ln1_gain = Vector::Zero(src.ln1_gain.size());
      dst.ln2_gain = Vector::Zero(src.ln2_gain.size());
      dst.wq = Matrix::Zero(src.wq.rows(), src.wq.cols());
      dst.wk = Matrix::Zero(src.wk.rows(), src.wk.cols());
      dst.wv = Matrix::Zero(src.wv.rows(), src.wv.cols());
      dst.wo = Matrix::Zero(src.wo.rows(), src.wo.cols());
      dst.w_mlp_in = Matrix::Zero(src.w_mlp_in.rows(), src.w_mlp_in.cols());
      dst.w_mlp_out = Matrix::Zero(src.w_mlp_out.rows(), src.w_mlp_out.cols());
    }
    g.lnf_gain_ = Vector::Zero(m.lnf_gain_.size());
    g.w_out_ = Matrix::Zero(m.w_out_.rows(), m.w_out_.cols());
    return g;
  }

  static void run_forward(const CausalLM& m, std::span<const TokenId> ids, Scratch& s) {
    const auto& cfg = m.config_;
    const Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
    if (t_len == 0) throw std::invalid_argument("forward: empty input");
    if (t_len > cfg.max_seq_len)
      throw std::runtime_error("forward: sequence length " + std::to_string(t_len) +
                               " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] < 0 || ids[i] >= cfg.vocab_size)
        throw std::runtime_error("forward: token id " + std::to_string(ids[i]) +
                                 " out of range at position " + std::to_string(i));

    const int d = cfg.d_model;
    const int n_heads = cfg.n_heads;
    const int hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Matrix x(t_len, d);
    for (Eigen::Index t = 0; t < t_len; ++t)
      x.row(t) = m.tok_emb_.row(ids[t]) + m.pos_emb_.row(t);

    s.layers.resize(m.layers_.size());
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      const auto& lay = m.layers_[l];
      auto& ls = s.layers[l];
      ls.attn_in = x;
      rmsnorm_forward(ls.attn_in, lay.ln1_gain, ls.a, ls.r1);
      ls.q.noalias() = ls.a * lay.wq;
      ls.k.noalias() = ls.a * lay.wk;
      ls.v.noalias() = ls.a * lay.wv;
      ls.attn_p.assign(n_heads, Matrix());
      ls.attn_concat.resize(t_len, d);
      for (int h = 0; h < n_heads; ++h) {
        const auto qh = ls.q.middleCols(h * hd, hd);
        const auto kh = ls.k.middleCols(h * hd, hd);
        const auto vh = ls.v.middleCols(h * hd, hd);
        Matrix scores = (qh * kh.transpose()) * scale;
        Matrix& p = ls.attn_p[h];
        p = Matrix::Zero(t_len, t_len);
        for (Eigen::Index i = 0; i < t_len; ++i) {
          // causal: position i attends to 0..i only
          const double row_max = scores.row(i).head(i + 1).maxCoeff();
          double denom = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            const double e = std::exp(scores(i, j) - row_max);
            p(i, j) = e;
            denom += e;
          }
          p.row(i).head(i + 1) /= denom;
        }
        ls.attn_concat.middleCols(h * hd, hd).noalias() = p * vh;
      }
      x.noalias() += ls.attn_concat * lay.wo;
      ls.mlp_in = x;
      rmsnorm_forward(ls.mlp_in, lay.ln2_gain, ls.b, ls.r2);
      ls.h_pre.noalias() = ls.b * lay.w_mlp_in;
      ls.h_act = ls.h_pre.unaryExpr([](double v) { return gelu_scalar(v); });
      x.noalias() += ls.h_act * lay.w_mlp_out;
    }

    s.x_final = x;
    rmsnorm_forward(s.x_final, m.lnf_gain_, s.f, s.rf);
    Matrix logits = s.f * m.w_out_;
    s.probs.resize(t_len, cfg.vocab_size);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const double row_max = logits.row(t).maxCoeff();
      s.probs.row(t) = (logits.row(t).array() - row_max).exp();
      s.probs.row(t) /= s.probs.row(t).sum();
    }
  }

  // dlogits is the gradient at the output-head logits (already including the
  // softmax+cross-entropy combination). Accumulates into g.
  static void backward(const CausalLM& m, std::span<const TokenId> ids, const Scratch& s,
                       const Matrix& dlogits, GradAccum& g) {
    const auto& cfg = m.config_;
    const Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
    const int d = cfg.d_model;
    const int n_heads = cfg.n_heads;
    const int hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    g.w_out_.noalias() += s.f.transpose() * dlogits;
    Matrix dx = dlogits * m.w_out_.transpose();
    {
      Matrix dx_pre;
      rmsnorm_backward(s.x_final, m.lnf_gain_, s.rf, dx, g.lnf_gain_, dx_pre);
      dx = std::move(dx_pre);
    }

    for (std::size_t li = m.layers_.size(); li-- > 0;) {
      const auto& lay = m.layers_[li];
      const auto& ls = s.layers[li];
      auto& lg = g.layers_[li];

      // MLP block (dx holds the gradient at the block output)
      lg.w_mlp_out.noalias() += ls.h_act.transpose() * dx;
      Matrix dh = dx * lay.w_mlp_out.transpose();
      Matrix dh_pre =
          dh.cwiseProduct(ls.h_pre.unaryExpr([](double v) { return gelu_grad_scalar(v); }));
      lg.w_mlp_in.noalias() += ls.b.transpose() * dh_pre;
      Matrix db = dh_pre * lay.w_mlp_in.transpose();
      Matrix d_mlp_in;
      rmsnorm_backward(ls.mlp_in, lay.ln2_gain, ls.r2, db, lg.ln2_gain, d_mlp_in);
      dx += d_mlp_in;  // residual path plus branch

      // Attention block
      lg.wo.noalias() += ls.attn_concat.transpose() * dx;
      Matrix d_concat = dx * lay.wo.transpose();
      Matrix dq(t_len, d), dk(t_len, d), dv(t_len, d);
      for (int h = 0; h < n_heads; ++h) {
        const auto qh = ls.q.middleCols(h * hd, hd);
        const auto kh = ls.k.middleCols(h * hd, hd);
        const auto vh = ls.v.middleCols(h * hd, hd);
        const auto d_oh = d_concat.middleCols(h * hd, hd);
        const Matrix& p = ls.attn_p[h];
        Matrix dp = d_oh * vh.transpose();
        dv.middleCols(h * hd, hd).noalias() = p.transpose() * d_oh;
        // softmax backward; masked entries have p == 0 so they stay zero
        const Vector row_dot = p.cwiseProduct(dp).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - row_dot);
        dq.middleCols(h * hd, hd).noalias() = scale * (ds * kh);
        dk.middleCols(h * hd, hd).noalias() = scale * (ds.transpose() * qh);
      }
      lg.wq.noalias() += ls.a.transpose() * dq;
      lg.wk.noalias() += ls.a.transpose() * dk;
      lg.wv.noalias() += ls.a.transpose() * dv;
      Matrix da = dq * lay.wq.transpose();
      da.noalias() += dk * lay.wk.transpose();
      da.noalias() += dv * lay.wv.transpose();
      Matrix d_attn_in;
      rmsnorm_backward(ls.attn_in, lay.ln1_gain, ls.r1, da, lg.ln1_gain, d_attn_in);
      dx += d_attn_in;
    }

    for (Eigen::Index t = 0; t < t_len; ++t) {
      g.tok_emb_.row(ids[t]) += dx.row(t);
      g.pos_emb_.row(t) += dx.row(t);
    }
  }
};

CausalLM::CausalLM(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.d_model;
  const int v = config_.vocab_size;
  std::mt19937_64 rng(config_.seed);
  const double resid_std = 0.02 / std::sqrt(2.0 * config_.n_layers);

  tok_emb_.resize(v, d);
  fill_gaussian(tok_emb_, 0.02, rng);
  pos_emb_.resize(config_.max_seq_len, d);
  fill_gaussian(pos_emb_, 0.02, rng);
  layers_.resize(static_cast<std::size_t>(config_.n_layers));
  for (auto& lay : layers_) {
    lay.ln1_gain = Vector::Ones(d);
    lay.ln2_gain = Vector::Ones(d);
    lay.wq.resize(d, d);
    fill_gaussian(lay.wq, 0.02, rng);
    lay.wk.resize(d, d);
    fill_gaussian(lay.wk, 0.02, rng);
    lay.wv.resize(d, d);
    fill_gaussian(lay.wv, 0.02, rng);
    lay.wo.resize(d, d);
    fill_gaussian(lay.wo, resid_std, rng);
    lay.w_mlp_in.resize(d, 4 * d);
    fill_gaussian(lay.w_mlp_in, 0.02, rng);
    lay.w_mlp_out.resize(4 * d, d);
    fill_gaussian(lay.w_mlp_out, resid_std, rng);
  }
  lnf_gain_ = Vector::Ones(d);
  // small head init keeps the untrained distribution close to uniform
  w_out_.resize(d, v);
  fill_gaussian(w_out_, 0.005, rng);
}

Matrix CausalLM::forward(std::span<const TokenId> input_ids) const {
  ModelOps::Scratch scratch;
  ModelOps::run_forward(*this, input_ids, scratch);
  return std::move(scratch.probs);
}

std::vector<ParamView> CausalLM::parameter_views() {
  std::vector<ParamView> views;
  ModelOps::visit_tensors(*this, [&](const std::string& name, auto& tensor) {
    views.push_back(ParamView{name, tensor.data(), tensor.size()});
  });
  return views;
}

std::vector<ParamView> CausalLM::parameter_views() const {
  // const access shares the mutable implementation; callers that receive
  // views from a const model must not write through them
  return const_cast<CausalLM*>(this)->parameter_views();
}

namespace {

std::size_t supervised_count(const TrainingBatchItem& item) {
  std::size_t n = 0;
  for (const auto label : item.label_ids)
    if (label != kIgnoreLabel) ++n;
  return n;
}

// Shared loss core: accumulates -log p over supervised positions and, when
// grads is non-null, the analytic gradients scaled by inv_total_supervised.
double loss_over_items(const CausalLM& model, const std::vector<TrainingBatchItem>& instances,
                       ModelOps::GradAccum* grads) {
  if (instances.empty()) throw std::invalid_argument("loss: no training instances");
  std::size_t total_supervised = 0;
  for (const auto& item : instances) total_supervised += supervised_count(item);
  const double inv_n = 1.0 / static_cast<double>(total_supervised);

  double loss_sum = 0.0;
  ModelOps::Scratch scratch;
  for (const auto& item : instances) {
    const auto& labels = item.label_ids;
    ModelOps::run_forward(model, item.input_ids, scratch);
    Matrix dlogits;
    if (grads != nullptr) dlogits = Matrix::Zero(scratch.probs.rows(), scratch.probs.cols());
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] == kIgnoreLabel) continue;
      if (labels[t] >= model.config().vocab_size)
        throw std::runtime_error("loss: label id " + std::to_string(labels[t]) +
                                 " out of range at position " + std::to_string(t));
      const auto ti = static_cast<Eigen::Index>(t);
      loss_sum -= std::log(scratch.probs(ti, labels[t]));
      if (grads != nullptr) {
        dlogits.row(ti) = scratch.probs.row(ti) * inv_n;
        dlogits(ti, labels[t]) -= inv_n;
      }
    }
    if (grads != nullptr) ModelOps::backward(model, item.input_ids, scratch, dlogits, *grads);
  }
  return loss_sum * inv_n;
}

}  // namespace

double training_loss(const CausalLM& model, const std::vector<TrainingBatchItem>& instances) {
  return loss_over_items(model, instances, nullptr);
}

double loss_and_gradients(const CausalLM& model,
                          const std::vector<TrainingBatchItem>& instances,
                          std::vector<std::vector<double>>& grads) {
  ModelOps::GradAccum accum = ModelOps::zero_like(model);
  const double loss = loss_over_items(model, instances, &accum);
  grads.clear();
  ModelOps::visit_tensors(accum, [&](const std::string&, auto& tensor) {
    grads.emplace_back(tensor.data(), tensor.data() + tensor.size());
  });
  return loss;
}

std::vector<double> train(CausalLM& model, const std::vector<TrainingBatchItem>& instances,
                          const TrainOptions& opts) {
  if (instances.empty()) throw std::invalid_argument("train: no training instances");
  if (opts.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (opts.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(opts.lr > 0.0) || !std::isfinite(opts.lr))
    throw std::invalid_argument("train: learning rate must be positive and finite");

  auto views = model.parameter_views();
  std::vector<std::vector<double>> m_state(views.size()), v_state(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    m_state[i].assign(static_cast<std::size_t>(views[i].size), 0.0);
    v_state[i].assign(static_cast<std::size_t>(views[i].size), 0.0);
  }

  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(opts.epochs));
  std::vector<std::vector<double>> grads;
  long step = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    double weighted_loss = 0.0;
    std::size_t epoch_supervised = 0;

    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<TrainingBatchItem> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(instances[order[i]]);

      const double batch_loss = loss_and_gradients(model, batch, grads);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", aborting (lower the learning rate or check the data)");
      std::size_t batch_supervised = 0;
      for (const auto& item : batch) batch_supervised += supervised_count(item);
      weighted_loss += batch_loss * static_cast<double>(batch_supervised);
      epoch_supervised += batch_supervised;

      ++step;
      const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < views.size(); ++i) {
        double* p = views[i].data;
        const auto& gbuf = grads[i];
        auto& mbuf = m_state[i];
        auto& vbuf = v_state[i];
        for (std::size_t j = 0; j < gbuf.size(); ++j) {
          mbuf[j] = kAdamBeta1 * mbuf[j] + (1.0 - kAdamBeta1) * gbuf[j];
          vbuf[j] = kAdamBeta2 * vbuf[j] + (1.0 - kAdamBeta2) * gbuf[j] * gbuf[j];
          const double m_hat = mbuf[j] / bias1;
          const double v_hat = vbuf[j] / bias2;
          p[j] -= opts.lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
        }
      }
    }
    history.push_back(weighted_loss / static_cast<double>(epoch_supervised));
  }
  return history;
}

ProbabilityTrace teacher_forced_probs(const CausalLM& model, const TokenizedItem& item,
                                      const Vocabulary& vocab) {
  (void)vocab;
  if (item.target_ids.empty())
    throw std::invalid_argument("teacher_forced_probs: item " + item.item_id +
                                " has empty target");
  const std::size_t p = item.prompt_ids.size();
  const std::size_t n = item.target_ids.size();
  if (p + n > static_cast<std::size_t>(model.config().max_seq_len))
    throw std::runtime_error("teacher_forced_probs: item " + item.item_id + " needs " +
                             std::to_string(p + n) + " positions but max_seq_len is " +
                             std::to_string(model.config().max_seq_len));

  std::vector<TokenId> input;
  input.reserve(p + n);
  input.push_back(Vocabulary::kBosId);
  input.insert(input.end(), item.prompt_ids.begin(), item.prompt_ids.end());
  input.insert(input.end(), item.target_ids.begin(), item.target_ids.end() - 1);

  const Matrix probs = model.forward(input);
  ProbabilityTrace trace;
  trace.item_id = item.item_id;
  trace.probs.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    trace.probs[i] = probs(static_cast<Eigen::Index>(p + i), item.target_ids[i]);
  return trace;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u64 json-header length, json header, raw doubles in
// parameter_views order (host byte order).

void save_checkpoint(const CausalLM& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto views = model.parameter_views();
  const auto& cfg = model.config();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& view : views)
    tensors.push_back({{"name", view.name}, {"size", view.size}});
  const nlohmann::json header{{"config",
                               {{"n_layers", cfg.n_layers},
                                {"d_model", cfg.d_model},
                                {"n_heads", cfg.n_heads},
                                {"max_seq_len", cfg.max_seq_len},
                                {"vocab_size", cfg.vocab_size},
                                {"seed", cfg.seed}}},
                              {"tensors", tensors}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& view : views)
    out.write(reinterpret_cast<const char*>(view.data),
              static_cast<std::streamsize>(view.size * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

CausalLM load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint file");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());

  ModelConfig cfg;
  nlohmann::json tensors;
  try {
    const auto header = nlohmann::json::parse(header_str);
    const auto& jc = header.at("config");
    cfg.n_layers = jc.at("n_layers").get<int>();
    cfg.d_model = jc.at("d_model").get<int>();
    cfg.n_heads = jc.at("n_heads").get<int>();
    cfg.max_seq_len = jc.at("max_seq_len").get<int>();
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();
    tensors = header.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: invalid header in " + path.string() + ": " +
                             e.what());
  }

  CausalLM model(cfg);
  auto views = model.parameter_views();
  if (tensors.size() != views.size())
    throw std::runtime_error("load_checkpoint: " + path.string() + " holds " +
                             std::to_string(tensors.size()) + " tensors, expected " +
                             std::to_string(views.size()));
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    const auto size = tensors[i].at("size").get<std::ptrdiff_t>();
    if (name != views[i].name || size != views[i].size)
      throw std::runtime_error("load_checkpoint: tensor mismatch at index " + std::to_string(i) +
                               " in " + path.string() + " (" + name + "/" + std::to_string(size) +
                               " vs " + views[i].name + "/" + std::to_string(views[i].size) + ")");
    in.read(reinterpret_cast<char*>(views[i].data),
            static_cast<std::streamsize>(views[i].size * sizeof(double)));
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated tensor data in " + path.string());
  }
  in.peek();
  if (!in.eof())
    throw std::runtime_error("load_checkpoint: trailing bytes in " + path.string());
  return model;
}

}  // namespace lud
