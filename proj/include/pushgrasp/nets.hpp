#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pushgrasp/states.hpp"

namespace pushgrasp {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Flat parameter and gradient storage. A fixed base alignment keeps Eigen's
// vectorised reductions over the mapped layers in the same order on every
// run; with malloc's 16-byte alignment the order, and so the bits, can vary.
template <typename T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Offsets of dense layers (row-major in x out weights, then out biases)
/// packed into one flat parameter buffer.
class ParamLayout {
 public:
  struct Slot {
    int in, out;
    std::size_t w, b;
  };

  int add(int in, int out) {
    slots_.push_back({in, out, total_, total_ + static_cast<std::size_t>(in) * out});
    total_ += static_cast<std::size_t>(in) * out + out;
    return static_cast<int>(slots_.size()) - 1;
  }
  std::size_t total() const { return total_; }
  const std::vector<Slot>& slots() const { return slots_; }

  template <typename T>
  Eigen::Map<Matrix<T>> W(ParamVector<T>& buf, int i) const {
    const auto& s = slots_[i];
    return {buf.data() + s.w, s.in, s.out};
  }
  template <typename T>
  Eigen::Map<const Matrix<T>> W(const ParamVector<T>& buf, int i) const {
    const auto& s = slots_[i];
    return {buf.data() + s.w, s.in, s.out};
  }
  template <typename T>
  Eigen::Map<RowVec<T>> b(ParamVector<T>& buf, int i) const {
    const auto& s = slots_[i];
    return {buf.data() + s.b, s.out};
  }
  template <typename T>
  Eigen::Map<const RowVec<T>> b(const ParamVector<T>& buf, int i) const {
    const auto& s = slots_[i];
    return {buf.data() + s.b, s.out};
  }

 private:
  std::vector<Slot> slots_;
  std::size_t total_ = 0;
};

struct LossConfig {
  double epsilon = 0.1;
  int classes = 2;
  void validate() const {
    if (!(epsilon >= 0 && epsilon < 1)) throw Error("loss epsilon must be in [0, 1)");
    if (classes < 2) throw Error("loss needs at least 2 classes");
  }
};

inline constexpr double kProbClamp = 1e-7;

/// Label-smoothed cross entropy over rows of class probabilities:
/// -(1/B) sum_i [(1-eps) log p_{i,y_i} + (eps/C) sum_c log p_{i,c}].
template <typename Derived>
double grasp_loss(const Eigen::MatrixBase<Derived>& probs, std::span<const int> labels, const LossConfig& cfg = {}) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) throw Error("grasp_loss: length mismatch");
  if (probs.rows() == 0) throw Error("grasp_loss: empty batch");
  const int C = static_cast<int>(probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double term = 0.0;
    for (int c = 0; c < C; ++c) {
      double lp = std::log(std::clamp(static_cast<double>(probs(i, c)), kProbClamp, 1.0 - kProbClamp));
      term += (cfg.epsilon / C) * lp + (c == labels[i] ? (1.0 - cfg.epsilon) * lp : 0.0);
    }
    total -= term;
  }
  return total / static_cast<double>(probs.rows());
}

/// Binary cross entropy, -(1/N) sum [y log p + (1-y) log(1-p)].
template <typename Scalar>
double push_loss(std::span<const Scalar> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw Error("push_loss: length mismatch");
  if (preds.empty()) throw Error("push_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double p = std::clamp(static_cast<double>(preds[i]), kProbClamp, 1.0 - kProbClamp);
    total -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(preds.size());
}

namespace detail {

template <typename T>
void relu_inplace(Matrix<T>& m) {
  m = m.cwiseMax(T(0));
}

// Uniform fan-in initialisation, U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
template <typename T>
void fan_in_init(const ParamLayout& layout, ParamVector<T>& params, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layout.slots().size(); ++i) {
    const auto& s = layout.slots()[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto W = layout.W(params, static_cast<int>(i));
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = static_cast<T>(u(rng));
    auto b = layout.b(params, static_cast<int>(i));
    for (Eigen::Index c = 0; c < b.size(); ++c) b(c) = static_cast<T>(u(rng));
  }
}

/// Column-wise max over rows with the first row attaining it.
template <typename T>
void column_max(const Matrix<T>& z, RowVec<T>& best, Eigen::Matrix<int, 1, Eigen::Dynamic>& arg) {
  best = z.row(0);
  arg.setZero(z.cols());
  for (Eigen::Index r = 1; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (z(r, c) > best(c)) {
        best(c) = z(r, c);
        arg(c) = static_cast<int>(r);
      }
    }
  }
}

}  // namespace detail

/// Grasp evaluator: shared per-row MLP 4-64-128-1024, max-pool to a 1x1024
/// global feature, head MLP 1024-512-128-2 with softmax.
template <typename T>
class GraspNet {
 public:
  static constexpr const char* kTag = "grasp_pointnet_1024";
  static constexpr double kInputScale = 20.0;  // metres -> ~unit range in the gripper frame

  struct Widths {
    int point1 = 64, point2 = 128, global = 1024, head1 = 512, head2 = 128;
  };

  /// Narrower widths are for tests only; checkpoints record the shapes.
  explicit GraspNet(const Widths& w = {}) {
    l1_ = layout_.add(kGraspStateCols, w.point1);
    l2_ = layout_.add(w.point1, w.point2);
    l3_ = layout_.add(w.point2, w.global);
    h1_ = layout_.add(w.global, w.head1);
    h2_ = layout_.add(w.head1, w.head2);
    h3_ = layout_.add(w.head2, 2);
    params_.assign(layout_.total(), T(0));
  }

  void init(std::uint64_t seed) { detail::fan_in_init(layout_, params_, seed); }
  const ParamLayout& layout() const { return layout_; }
  ParamVector<T>& params() { return params_; }
  const ParamVector<T>& params() const { return params_; }
  int output_layer() const { return h3_; }

  /// Class probabilities (graspable = column 1) for each state.
  Matrix<T> predict(std::span<const StateMatrix* const> states) const { return run(states).probs; }

  /// Mean smoothed cross entropy over the batch and its exact gradient.
  /// `scores`, when given, receives the graspable probability of each state.
  double loss_and_gradient(std::span<const StateMatrix* const> states, std::span<const int> labels,
                           const LossConfig& cfg, ParamVector<T>& grad, std::vector<double>* scores = nullptr) const {
    const Pass f = run(states);
    const Eigen::Index B = f.probs.rows();
    if (scores)
      for (Eigen::Index i = 0; i < B; ++i) scores->push_back(static_cast<double>(f.probs(i, 1)));
    const double loss = grasp_loss(f.probs, labels, cfg);
    grad.assign(layout_.total(), T(0));

    // dL/dlogit_k = -(1/B) sum_c w_c [p_c unclamped] (delta_ck - p_k)
    Matrix<T> dlogit = Matrix<T>::Zero(B, 2);
    for (Eigen::Index i = 0; i < B; ++i) {
      for (int c = 0; c < 2; ++c) {
        double p = static_cast<double>(f.probs(i, c));
        if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
        double w = cfg.epsilon / cfg.classes + (c == labels[i] ? 1.0 - cfg.epsilon : 0.0);
        for (int k = 0; k < 2; ++k)
          dlogit(i, k) -= static_cast<T>(w * ((c == k ? 1.0 : 0.0) - static_cast<double>(f.probs(i, k))) / B);
      }
    }
    Matrix<T> dg = head_backward(f, dlogit, grad);

    // Max-pool backward: each channel routes its gradient to one row. Work on
    // transposed copies so both updates touch contiguous memory.
    const Matrix<T> W3t = layout_.W(params_, l3_).transpose();
    Matrix<T> gW3t = Matrix<T>::Zero(W3t.rows(), W3t.cols());
    auto gb3 = layout_.b(grad, l3_);
    Matrix<T> dh2 = Matrix<T>::Zero(f.h2.rows(), f.h2.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
      for (Eigen::Index c = 0; c < dg.cols(); ++c) {
        if (!(f.gmax(i, c) > T(0)) || dg(i, c) == T(0)) continue;  // relu inactive at the max
        const Eigen::Index row = f.offsets[i] + f.argmax(i, c);
        const T d = dg(i, c);
        gW3t.row(c) += d * f.h2.row(row);
        gb3(c) += d;
        dh2.row(row) += d * W3t.row(c);
      }
    }
    layout_.W(grad, l3_) = gW3t.transpose();
    dh2.array() *= (f.h2.array() > T(0)).template cast<T>();
    layout_.W(grad, l2_).noalias() += f.h1.transpose() * dh2;
    layout_.b(grad, l2_) += dh2.colwise().sum();
    Matrix<T> dh1 = dh2 * layout_.W(params_, l2_).transpose();
    dh1.array() *= (f.h1.array() > T(0)).template cast<T>();
    layout_.W(grad, l1_).noalias() += f.x.transpose() * dh1;
    layout_.b(grad, l1_) += dh1.colwise().sum();
    return loss;
  }

 private:
  struct Pass {
    std::vector<Eigen::Index> offsets;
    Matrix<T> x, h1, h2;
    Matrix<T> gmax;                // B x 1024, pre-relu column max
    Eigen::MatrixXi argmax;        // B x 1024, row within the state
    Matrix<T> g, a1, a2, probs;    // g = relu(gmax)
  };

  Pass run(std::span<const StateMatrix* const> states) const {
    Pass f;
    Eigen::Index total = 0;
    for (auto* s : states) {
      if (s->cols() != kGraspStateCols || s->rows() == 0) throw Error("grasp state has wrong shape");
      f.offsets.push_back(total);
      total += s->rows();
    }
    const Eigen::Index B = static_cast<Eigen::Index>(states.size());
    f.x.resize(total, kGraspStateCols);
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto& s = *states[i];
      f.x.middleRows(f.offsets[i], s.rows()) = s.template cast<T>();
    }
    f.x.leftCols(3) *= T(kInputScale);
    f.h1 = (f.x * layout_.W(params_, l1_)).rowwise() + layout_.b(params_, l1_);
    detail::relu_inplace(f.h1);
    f.h2 = (f.h1 * layout_.W(params_, l2_)).rowwise() + layout_.b(params_, l2_);
    detail::relu_inplace(f.h2);

    const auto W3 = layout_.W(params_, l3_);
    const auto b3 = layout_.b(params_, l3_);
    f.gmax.resize(B, W3.cols());
    f.argmax.resize(B, W3.cols());
    RowVec<T> best;
    Eigen::Matrix<int, 1, Eigen::Dynamic> arg;
    Matrix<T> z;
    for (Eigen::Index i = 0; i < B; ++i) {
      const Eigen::Index n = states[i]->rows();
      z.noalias() = f.h2.middleRows(f.offsets[i], n) * W3;
      detail::column_max(z, best, arg);
      f.gmax.row(i) = best + b3;
      f.argmax.row(i) = arg;
    }
    f.g = f.gmax.cwiseMax(T(0));
    f.a1 = (f.g * layout_.W(params_, h1_)).rowwise() + layout_.b(params_, h1_);
    detail::relu_inplace(f.a1);
    f.a2 = (f.a1 * layout_.W(params_, h2_)).rowwise() + layout_.b(params_, h2_);
    detail::relu_inplace(f.a2);
    Matrix<T> logits = (f.a2 * layout_.W(params_, h3_)).rowwise() + layout_.b(params_, h3_);
    f.probs.resize(B, 2);
    for (Eigen::Index i = 0; i < B; ++i) {
      T m = logits.row(i).maxCoeff();
      T e0 = std::exp(logits(i, 0) - m), e1 = std::exp(logits(i, 1) - m);
      f.probs(i, 0) = e0 / (e0 + e1);
      f.probs(i, 1) = e1 / (e0 + e1);
    }
    return f;
  }

  Matrix<T> head_backward(const Pass& f, const Matrix<T>& dlogit, ParamVector<T>& grad) const {
    layout_.W(grad, h3_).noalias() += f.a2.transpose() * dlogit;
    layout_.b(grad, h3_) += dlogit.colwise().sum();
    Matrix<T> da2 = dlogit * layout_.W(params_, h3_).transpose();
    da2.array() *= (f.a2.array() > T(0)).template cast<T>();
    layout_.W(grad, h2_).noalias() += f.a1.transpose() * da2;
    layout_.b(grad, h2_) += da2.colwise().sum();
    Matrix<T> da1 = da2 * layout_.W(params_, h2_).transpose();
    da1.array() *= (f.a1.array() > T(0)).template cast<T>();
    layout_.W(grad, h1_).noalias() += f.g.transpose() * da1;
    layout_.b(grad, h1_) += da1.colwise().sum();
    return da1 * layout_.W(params_, h1_).transpose();
  }

  ParamLayout layout_;
  ParamVector<T> params_;
  int l1_, l2_, l3_, h1_, h2_, h3_;
};

/// Push evaluator: per-row MLP 6-64-128; the 64-wide local feature of each row
/// is concatenated with the max-pooled 128-wide global feature (192 per row).
/// Only the push-point row (row 0) goes through the head MLP 192-96-32-1.
template <typename T>
class PushNet {
 public:
  static constexpr const char* kTag = "push_pointnet_192";
  static constexpr int kLocalWidth = 64;
  static constexpr int kGlobalWidth = 128;
  static constexpr int kRowFeatureWidth = kLocalWidth + kGlobalWidth;

  struct Widths {
    int local = kLocalWidth, global = kGlobalWidth, head1 = 96, head2 = 32;
  };

  explicit PushNet(const Widths& w = {}) : local_(w.local), global_(w.global) {
    l1_ = layout_.add(kPushStateCols, local_);
    l2_ = layout_.add(local_, global_);
    h1_ = layout_.add(local_ + global_, w.head1);
    h2_ = layout_.add(w.head1, w.head2);
    h3_ = layout_.add(w.head2, 1);
    params_.assign(layout_.total(), T(0));
  }

  void init(std::uint64_t seed) { detail::fan_in_init(layout_, params_, seed); }
  const ParamLayout& layout() const { return layout_; }
  ParamVector<T>& params() { return params_; }
  const ParamVector<T>& params() const { return params_; }
  int output_layer() const { return h3_; }

  /// Push effectiveness probability per state.
  std::vector<T> predict(std::span<const StateMatrix* const> states) const { return run(states).preds; }

  /// Per-row 192-wide features of one state (local 64 | broadcast global 128).
  Matrix<T> row_features(const StateMatrix& state) const {
    const StateMatrix* p = &state;
    Pass f = run(std::span<const StateMatrix* const>(&p, 1));
    Matrix<T> out(state.rows(), (local_ + global_));
    out.leftCols(local_) = f.h1;
    out.rightCols(global_) = f.g.row(0).replicate(state.rows(), 1);
    return out;
  }

  double loss_and_gradient(std::span<const StateMatrix* const> states, std::span<const int> labels,
                           const LossConfig& /*unused: plain BCE*/, ParamVector<T>& grad,
                           std::vector<double>* scores = nullptr) const {
    const Pass f = run(states);
    const Eigen::Index B = static_cast<Eigen::Index>(f.preds.size());
    if (scores)
      for (T p : f.preds) scores->push_back(static_cast<double>(p));
    const double loss = push_loss<T>(f.preds, labels);
    grad.assign(layout_.total(), T(0));

    Matrix<T> dz(B, 1);
    for (Eigen::Index i = 0; i < B; ++i) {
      double p = static_cast<double>(f.preds[i]);
      bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
      dz(i, 0) = clamped ? T(0) : static_cast<T>((p - labels[i]) / B);
    }
    layout_.W(grad, h3_).noalias() += f.a2.transpose() * dz;
    layout_.b(grad, h3_) += dz.colwise().sum();
    Matrix<T> da2 = dz * layout_.W(params_, h3_).transpose();
    da2.array() *= (f.a2.array() > T(0)).template cast<T>();
    layout_.W(grad, h2_).noalias() += f.a1.transpose() * da2;
    layout_.b(grad, h2_) += da2.colwise().sum();
    Matrix<T> da1 = da2 * layout_.W(params_, h2_).transpose();
    da1.array() *= (f.a1.array() > T(0)).template cast<T>();
    layout_.W(grad, h1_).noalias() += f.feat.transpose() * da1;
    layout_.b(grad, h1_) += da1.colwise().sum();
    const Matrix<T> dfeat = da1 * layout_.W(params_, h1_).transpose();

    // Gradient reaches only row 0 (local half) and the argmax rows (global half).
    auto W2 = layout_.W(params_, l2_);
    auto gW2 = layout_.W(grad, l2_);
    auto gb2 = layout_.b(grad, l2_);
    auto W1 = layout_.W(params_, l1_);
    auto gW1 = layout_.W(grad, l1_);
    auto gb1 = layout_.b(grad, l1_);
    std::vector<Eigen::Index> rows;
    std::vector<int> slot_of;
    for (Eigen::Index i = 0; i < B; ++i) {
      const Eigen::Index n = f.offsets[i + 1] - f.offsets[i];
      slot_of.assign(static_cast<std::size_t>(n), -1);
      rows.clear();
      auto slot = [&](Eigen::Index r) {
        if (slot_of[r] < 0) {
          slot_of[r] = static_cast<int>(rows.size());
          rows.push_back(r);
        }
        return slot_of[r];
      };
      slot(0);
      for (int c = 0; c < global_; ++c)
        if (f.gmax(i, c) > T(0) && dfeat(i, local_ + c) != T(0)) slot(f.argmax(i, c));
      const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
      Matrix<T> dh2 = Matrix<T>::Zero(m, global_);
      Matrix<T> dh1 = Matrix<T>::Zero(m, local_);
      Matrix<T> h1 = Matrix<T>(m, local_), x = Matrix<T>(m, kPushStateCols);
      for (Eigen::Index k = 0; k < m; ++k) {
        h1.row(k) = f.h1.row(f.offsets[i] + rows[k]);
        x.row(k) = f.x.row(f.offsets[i] + rows[k]);
      }
      dh1.row(0) = dfeat.row(i).leftCols(local_);
      for (int c = 0; c < global_; ++c)
        if (f.gmax(i, c) > T(0)) dh2(slot_of[f.argmax(i, c)], c) += dfeat(i, local_ + c);
      gW2.noalias() += h1.transpose() * dh2;
      gb2 += dh2.colwise().sum();
      dh1.noalias() += dh2 * W2.transpose();
      dh1.array() *= (h1.array() > T(0)).template cast<T>();
      gW1.noalias() += x.transpose() * dh1;
      gb1 += dh1.colwise().sum();
    }
    return loss;
  }

 private:
  struct Pass {
    std::vector<Eigen::Index> offsets;
    Matrix<T> x, h1;
    Matrix<T> gmax;          // B x 128, pre-relu column max of layer 2
    Eigen::MatrixXi argmax;  // B x 128
    Matrix<T> g, feat, a1, a2;
    std::vector<T> preds;
  };

  static void normalize(Matrix<T>& x) {
    x.col(0).array() = (x.col(0).array() - T(kPushReferenceX)) * T(5);
    x.col(1).array() *= T(5);
    x.col(2).array() *= T(10);
  }

  Pass run(std::span<const StateMatrix* const> states) const {
    Pass f;
    Eigen::Index total = 0;
    for (auto* s : states) {
      if (s->cols() != kPushStateCols || s->rows() == 0) throw Error("push state has wrong shape");
      f.offsets.push_back(total);
      total += s->rows();
    }
    f.offsets.push_back(total);
    const Eigen::Index B = static_cast<Eigen::Index>(states.size());
    f.x.resize(total, kPushStateCols);
    for (Eigen::Index i = 0; i < B; ++i) f.x.middleRows(f.offsets[i], states[i]->rows()) = states[i]->template cast<T>();
    normalize(f.x);
    f.h1 = (f.x * layout_.W(params_, l1_)).rowwise() + layout_.b(params_, l1_);
    detail::relu_inplace(f.h1);

    const auto W2 = layout_.W(params_, l2_);
    const auto b2 = layout_.b(params_, l2_);
    f.gmax.resize(B, global_);
    f.argmax.resize(B, global_);
    f.feat.resize(B, (local_ + global_));
    RowVec<T> best;
    Eigen::Matrix<int, 1, Eigen::Dynamic> arg;
    Matrix<T> z;
    for (Eigen::Index i = 0; i < B; ++i) {
      const Eigen::Index n = f.offsets[i + 1] - f.offsets[i];
      z.noalias() = f.h1.middleRows(f.offsets[i], n) * W2;
      detail::column_max(z, best, arg);
      f.gmax.row(i) = best + b2;
      f.argmax.row(i) = arg;
      f.feat.row(i).leftCols(local_) = f.h1.row(f.offsets[i]);
    }
    f.g = f.gmax.cwiseMax(T(0));
    f.feat.rightCols(global_) = f.g;
    f.a1 = (f.feat * layout_.W(params_, h1_)).rowwise() + layout_.b(params_, h1_);
    detail::relu_inplace(f.a1);
    f.a2 = (f.a1 * layout_.W(params_, h2_)).rowwise() + layout_.b(params_, h2_);
    detail::relu_inplace(f.a2);
    Matrix<T> z_out = (f.a2 * layout_.W(params_, h3_)).rowwise() + layout_.b(params_, h3_);
    f.preds.resize(static_cast<std::size_t>(B));
    for (Eigen::Index i = 0; i < B; ++i) f.preds[i] = T(1) / (T(1) + std::exp(-z_out(i, 0)));
    return f;
  }

  ParamLayout layout_;
  ParamVector<T> params_;
  int local_, global_;
  int l1_, l2_, h1_, h2_, h3_;
};

template <typename T>
std::array<T, 2> forward_grasp(const GraspNet<T>& net, const StateMatrix& state) {
  const StateMatrix* p = &state;
  Matrix<T> pr = net.predict(std::span<const StateMatrix* const>(&p, 1));
  return {pr(0, 0), pr(0, 1)};
}

template <typename T>
T forward_push(const PushNet<T>& net, const StateMatrix& state) {
  const StateMatrix* p = &state;
  return net.predict(std::span<const StateMatrix* const>(&p, 1))[0];
}

inline constexpr std::size_t kInferenceChunk = 64;

/// Graspable probability for each state; chunked to bound memory.
template <typename T>
std::vector<double> batched_inference(const GraspNet<T>& net, std::span<const StateMatrix* const> states) {
  std::vector<double> out;
  out.reserve(states.size());
  for (std::size_t s = 0; s < states.size(); s += kInferenceChunk) {
    auto chunk = states.subspan(s, std::min(kInferenceChunk, states.size() - s));
    Matrix<T> pr = net.predict(chunk);
    for (Eigen::Index i = 0; i < pr.rows(); ++i) out.push_back(static_cast<double>(pr(i, 1)));
  }
  return out;
}

template <typename T>
std::vector<double> batched_inference(const PushNet<T>& net, std::span<const StateMatrix* const> states) {
  std::vector<double> out;
  out.reserve(states.size());
  for (std::size_t s = 0; s < states.size(); s += kInferenceChunk) {
    auto chunk = states.subspan(s, std::min(kInferenceChunk, states.size() - s));
    for (T v : net.predict(chunk)) out.push_back(static_cast<double>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  std::uint32_t epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
  std::uint64_t seed = 0;
  std::string variant;  // e.g. "no_gripper_pc"
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  std::string tag;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> layer_shapes;  // (in, out) per dense layer
  std::vector<float> weights;
  CheckpointMeta meta;

  std::size_t expected_weights() const {
    std::size_t n = 0;
    for (auto [in, out] : layer_shapes) n += static_cast<std::size_t>(in) * out + out;
    return n;
  }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "PGCK", u32 version, string tag, u32 layer count, (u32 in, u32 out)
// per layer, u64 weight count, f32 weights, then metadata (u32 epoch, f64
// loss, f64 val accuracy, u64 seed, string variant). Strings are u32 length
// prefixed; everything little-endian.
inline std::vector<char> serialize_checkpoint(const Checkpoint& ck) {
  if (ck.expected_weights() != ck.weights.size()) throw Error("checkpoint shape table does not match weights");
  ByteWriter w;
  w.put_bytes("PGCK");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(ck.tag);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.layer_shapes.size()));
  for (auto [in, out] : ck.layer_shapes) {
    w.put<std::uint32_t>(in);
    w.put<std::uint32_t>(out);
  }
  w.put<std::uint64_t>(ck.weights.size());
  for (float v : ck.weights) w.put<float>(v);
  w.put<std::uint32_t>(ck.meta.epoch);
  w.put<double>(ck.meta.loss);
  w.put<double>(ck.meta.val_accuracy);
  w.put<std::uint64_t>(ck.meta.seed);
  w.put_string(ck.meta.variant);
  return w.bytes();
}

inline Checkpoint parse_checkpoint(const std::vector<char>& bytes) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != "PGCK") throw Error("not a checkpoint file");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw Error("unsupported checkpoint version");
  Checkpoint ck;
  ck.tag = r.get_string();
  auto n_layers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    auto in = r.get<std::uint32_t>();
    auto out = r.get<std::uint32_t>();
    ck.layer_shapes.emplace_back(in, out);
  }
  auto n = r.get<std::uint64_t>();
  if (n != ck.expected_weights()) throw Error("checkpoint shape table does not match weights");
  ck.weights.resize(n);
  for (auto& v : ck.weights) v = r.get<float>();
  ck.meta.epoch = r.get<std::uint32_t>();
  ck.meta.loss = r.get<double>();
  ck.meta.val_accuracy = r.get<double>();
  ck.meta.seed = r.get<std::uint64_t>();
  ck.meta.variant = r.get_string();
  if (r.remaining() != 0) throw Error("trailing bytes in checkpoint");
  return ck;
}

template <typename Net>
Checkpoint to_checkpoint(const Net& net, const CheckpointMeta& meta = {}) {
  Checkpoint ck;
  ck.tag = Net::kTag;
  for (const auto& s : net.layout().slots()) ck.layer_shapes.emplace_back(s.in, s.out);
  ck.weights.reserve(net.params().size());
  for (auto v : net.params()) ck.weights.push_back(static_cast<float>(v));
  ck.meta = meta;
  return ck;
}

template <typename Net>
Net from_checkpoint(const Checkpoint& ck) {
  Net net;
  if (ck.tag != Net::kTag) throw Error("checkpoint architecture '" + ck.tag + "' does not match '" + Net::kTag + "'");
  const auto& slots = net.layout().slots();
  if (slots.size() != ck.layer_shapes.size()) throw Error("checkpoint layer count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (static_cast<std::uint32_t>(slots[i].in) != ck.layer_shapes[i].first ||
        static_cast<std::uint32_t>(slots[i].out) != ck.layer_shapes[i].second)
      throw Error("checkpoint layer shape mismatch");
  for (std::size_t i = 0; i < ck.weights.size(); ++i)
    net.params()[i] = static_cast<typename std::decay_t<decltype(net.params())>::value_type>(ck.weights[i]);
  return net;
}

// ---------------------------------------------------------------------------
// Optimisation
// ---------------------------------------------------------------------------

enum class ScheduleKind { step_decay, plateau_decay };
enum class OptimizerKind { adamw, adam };

struct TrainConfig {
  int batch_size = 256;
  int val_batch_size = 256;
  double lr0 = 5e-4;
  ScheduleKind schedule = ScheduleKind::step_decay;
  std::vector<int> milestones{40, 55, 80};
  double decay_factor = 0.1;
  double plateau_min_delta = 1e-5;
  int epochs = 85;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double weight_decay = 1e-2;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  static TrainConfig grasp_defaults() { return {}; }
  static TrainConfig push_defaults() {
    TrainConfig c;
    c.batch_size = 128;
    c.val_batch_size = 64;
    c.lr0 = 8e-4;
    c.schedule = ScheduleKind::plateau_decay;
    c.milestones.clear();
    c.decay_factor = 0.95;
    c.epochs = 100;
    c.optimizer = OptimizerKind::adam;
    c.weight_decay = 0.0;
    return c;
  }

  void validate() const {
    if (!(lr0 > 0)) throw Error("lr0 must be positive");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1 || val_batch_size < 1) throw Error("batch sizes must be >= 1");
    if (!(val_fraction >= 0 && val_fraction < 1)) throw Error("val_fraction must be in [0, 1)");
  }
};

/// Learning rate of the step schedule during 1-based epoch `epoch`:
/// lr0 * factor^(number of milestones already passed).
inline double step_decay_lr(double lr0, std::span<const int> milestones, double factor, int epoch) {
  double lr = lr0;
  for (int m : milestones)
    if (m < epoch) lr *= factor;
  return lr;
}

/// Reduce-on-plateau tracker; patience zero.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr0, double factor, double min_delta) : lr_(lr0), factor_(factor), min_delta_(min_delta) {}
  double lr() const { return lr_; }
  /// Returns the learning rate to use for the next epoch.
  double observe(double val_loss) {
    if (val_loss < best_ - min_delta_) best_ = val_loss;
    else lr_ *= factor_;
    return lr_;
  }

 private:
  double lr_, factor_, min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
};

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double weight_decay, bool decoupled)
      : m_(n, 0.0), v_(n, 0.0), wd_(weight_decay), decoupled_(decoupled) {}

  void step(ParamVector<T>& params, const ParamVector<T>& grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_), bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      double p = static_cast<double>(params[i]);
      double g = static_cast<double>(grad[i]);
      if (decoupled_) p *= 1.0 - lr * wd_;
      else g += wd_ * p;
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
      p -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kEps);
      params[i] = static_cast<T>(p);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<double> m_, v_;
  double wd_;
  bool decoupled_;
  int t_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0, train_loss = 0, train_accuracy = 0, val_loss = 0, val_accuracy = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> history;
};

/// Mean loss and accuracy of a net over (states, labels).
template <typename Net>
std::pair<double, double> evaluate(const Net& net, std::span<const StateMatrix* const> states, std::span<const int> labels,
                                   const LossConfig& loss_cfg, int batch = 256) {
  if (states.empty()) return {0.0, 0.0};
  std::vector<double> scores = batched_inference(net, states);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < states.size(); s += static_cast<std::size_t>(batch)) {
    std::size_t n = std::min<std::size_t>(batch, states.size() - s);
    if constexpr (std::is_same_v<Net, GraspNet<typename std::decay_t<decltype(net.params())>::value_type>>) {
      Eigen::MatrixXd pr(n, 2);
      for (std::size_t i = 0; i < n; ++i) pr(i, 0) = 1.0 - scores[s + i], pr(i, 1) = scores[s + i];
      loss += grasp_loss(pr, labels.subspan(s, n), loss_cfg) * n;
    } else {
      loss += push_loss<double>(std::span<const double>(scores).subspan(s, n), labels.subspan(s, n)) * n;
    }
  }
  for (std::size_t i = 0; i < states.size(); ++i) correct += ((scores[i] > 0.5) == (labels[i] == 1));
  return {loss / states.size(), static_cast<double>(correct) / states.size()};
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Deterministic mini-batch training. The data are split train/val by `seed`;
/// each epoch reshuffles the training part with a seed derived from the epoch.
template <typename Net>
TrainResult train(Net& net, const std::vector<StateMatrix>& states, const std::vector<int>& labels,
                  const TrainConfig& cfg, const LossConfig& loss_cfg = {}, const EpochCallback& on_epoch = {},
                  const std::string& variant = {}) {
  cfg.validate();
  loss_cfg.validate();
  if (states.empty() || states.size() != labels.size()) throw Error("train: dataset empty or mismatched");
  using T = typename std::decay_t<decltype(net.params())>::value_type;

  std::vector<std::size_t> order(states.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  {
    Rng rng(derive_seed(cfg.seed, 0x73706c6974ULL));
    std::shuffle(order.begin(), order.end(), rng);
  }
  const std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * states.size()));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  if (train_idx.empty()) throw Error("train: no training samples after split");
  std::vector<const StateMatrix*> val_states;
  std::vector<int> val_labels;
  for (auto i : val_idx) val_states.push_back(&states[i]), val_labels.push_back(labels[i]);

  AdamOptimizer<T> opt(net.params().size(), cfg.weight_decay, cfg.optimizer == OptimizerKind::adamw);
  PlateauSchedule plateau(cfg.lr0, cfg.decay_factor, cfg.plateau_min_delta);
  TrainResult result;
  ParamVector<T> grad;
  std::vector<const StateMatrix*> batch;
  std::vector<int> batch_labels;
  double lr = cfg.lr0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.schedule == ScheduleKind::step_decay) lr = step_decay_lr(cfg.lr0, cfg.milestones, cfg.decay_factor, epoch);
    Rng rng(derive_seed(cfg.seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch)));
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    std::vector<double> train_scores;
    std::size_t train_correct = 0;
    for (std::size_t s = 0; s < train_idx.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, train_idx.size() - s);
      batch.clear();
      batch_labels.clear();
      for (std::size_t k = 0; k < n; ++k) {
        batch.push_back(&states[train_idx[s + k]]);
        batch_labels.push_back(labels[train_idx[s + k]]);
      }
      const std::size_t first = train_scores.size();
      double loss = net.loss_and_gradient(batch, batch_labels, loss_cfg, grad, &train_scores);
      for (std::size_t k = 0; k < n; ++k) train_correct += (train_scores[first + k] > 0.5) == (batch_labels[k] == 1);
      if (!std::isfinite(loss))
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(s / cfg.batch_size));
      opt.step(net.params(), grad, lr);
      loss_sum += loss * static_cast<double>(n);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(train_idx.size());
    // Running accuracy of the training passes, as seen while the weights moved.
    m.train_accuracy = static_cast<double>(train_correct) / static_cast<double>(train_idx.size());
    if (!val_states.empty()) {
      auto [vl, va] = evaluate(net, val_states, val_labels, loss_cfg, cfg.val_batch_size);
      m.val_loss = vl;
      m.val_accuracy = va;
    } else {
      m.val_loss = m.train_loss;
      m.val_accuracy = m.train_accuracy;
    }
    if (!std::isfinite(m.val_loss)) throw Error("non-finite validation loss at epoch " + std::to_string(epoch));
    if (cfg.schedule == ScheduleKind::plateau_decay) lr = plateau.observe(m.val_loss);
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  const auto& last = result.history.back();
  result.checkpoint = to_checkpoint(net, {static_cast<std::uint32_t>(last.epoch), last.val_loss, last.val_accuracy, cfg.seed, variant});
  return result;
}

}  // namespace pushgrasp
