#pragma once

#include "ipc/msssim.hpp"

namespace ipc {

enum class RecKind { L2, MSSSIM, None };

inline RecKind rec_kind_from_string(const std::string& s) {
  if (s == "l2") return RecKind::L2;
  if (s == "msssim") return RecKind::MSSSIM;
  if (s == "none") return RecKind::None;
  throw std::runtime_error("unknown reconstruction kind '" + s + "' (l2|msssim|none)");
}

inline const char* to_string(RecKind k) {
  switch (k) {
    case RecKind::L2: return "l2";
    case RecKind::MSSSIM: return "msssim";
    default: return "none";
  }
}

struct LossWeights {
  double lambda_rate = 0.01;
  double lambda_id = 0.0;
  RecKind kind = RecKind::L2;

  void validate() const {
    if (lambda_rate < 0) throw std::runtime_error("loss: lambda_rate must be >= 0");
    if (kind == RecKind::None && lambda_id <= 0)
      throw std::runtime_error("loss: kind=none with lambda_id=0 is a degenerate rate-only objective");
  }
};

struct LossBreakdown {
  double rec = 0;
  double rate_bits = 0;
  double id = 0;
  double total = 0;
};

template <class T>
Var<T> loss_rec(const Var<T>& x, const Var<T>& x_hat, RecKind kind,
                const MsssimConfig& cfg = {}) {
  require_same_shape(x->value.shape, x_hat->value.shape, "loss_rec");
  switch (kind) {
    case RecKind::L2: {
      auto d = sub(x, x_hat);
      return mean(mul(d, d));
    }
    case RecKind::MSSSIM:
      return sadd(neg(msssim(x, x_hat, cfg)), T(1));
    default:
      throw std::runtime_error("loss_rec: kind=none has no reconstruction term");
  }
}

// batch mean of total -log2 p over latent and hyper-latent
template <class T>
Var<T> loss_rate(const Var<T>& p_y, const Var<T>& p_z) {
  int n = p_y->value.shape.empty() ? 1 : p_y->value.shape[0];
  auto bits = add(sum(log_(p_y)), sum(log_(p_z)));
  return smul(bits, T(-1.0 / (std::log(2.0) * n)));
}

// batch mean of 1 - cos(e, e_hat); embeddings are rows of [N,D]
template <class T>
Var<T> loss_id(const Var<T>& e, const Var<T>& e_hat) {
  require_same_shape(e->value.shape, e_hat->value.shape, "loss_id");
  const Shape& s = e->value.shape;
  if (s.size() != 2) throw std::runtime_error("loss_id: expected [N,D] embeddings, got " + shape_str(s));
  int n = s[0], d = s[1];
  auto e4 = reshape(e, {1, n, 1, d});    // rows as channels
  auto eh4 = reshape(e_hat, {1, n, 1, d});
  Var<T> acc;
  for (int i = 0; i < n; ++i) {
    auto a = reshape(slice_channels(e4, i, i + 1), {d});
    auto b = reshape(slice_channels(eh4, i, i + 1), {d});
    auto na = l2_norm(a), nb = l2_norm(b);
    if (na->value[0] == T(0) || nb->value[0] == T(0))
      throw std::runtime_error("loss_id: zero-norm embedding (degenerate embedder)");
    auto cosv = div_(dot(a, b), mul(na, nb));
    auto term = sadd(neg(cosv), T(1));
    acc = acc ? add(acc, term) : term;
  }
  return smul(acc, T(1.0 / n));
}

template <class T>
struct TotalLoss {
  Var<T> total;
  Var<T> rec;   // null when kind == None
  Var<T> rate;
  Var<T> id;    // null when lambda_id == 0

  LossBreakdown breakdown() const {
    LossBreakdown b;
    if (rec) b.rec = (double)rec->value[0];
    b.rate_bits = (double)rate->value[0];
    if (id) b.id = (double)id->value[0];
    b.total = (double)total->value[0];
    return b;
  }
};

// total = [L_rec] + lambda_rate * L_rate + [lambda_id * L_id]; the identity
// term is omitted entirely at lambda_id == 0 so the graph matches the
// reconstruction-only objective bitwise.
template <class T>
TotalLoss<T> loss_total(const Var<T>& rec, const Var<T>& rate, const Var<T>& id,
                        const LossWeights& w) {
  w.validate();
  TotalLoss<T> out;
  out.rate = rate;
  Var<T> total = smul(rate, T(w.lambda_rate));
  if (w.kind != RecKind::None) {
    if (!rec) throw std::runtime_error("loss_total: reconstruction term required for this kind");
    out.rec = rec;
    total = add(rec, total);
  }
  if (w.lambda_id != 0.0) {
    if (!id) throw std::runtime_error("loss_total: identity term required when lambda_id > 0");
    out.id = id;
    total = add(total, smul(id, T(w.lambda_id)));
  }
  out.total = total;
  return out;
}

}  // namespace ipc
