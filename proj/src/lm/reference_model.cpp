// SPDX-License-Identifier: Apache-2.0
#include "neoword/lm/reference_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskValue = -1e30;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

struct LayerGrads {
  Vector ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix wq, wk, wv, wo;
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

struct Grads {
  Matrix emb;
  Matrix pos;
  std::vector<LayerGrads> layers;
  Vector lnf_g, lnf_b;
  Matrix head;
  Vector head_b;
};

Grads zero_grads(const BodyParams& body, Eigen::Index vocab_rows) {
  Grads g;
  Eigen::Index d = body.config.d;
  Eigen::Index ff = static_cast<Eigen::Index>(body.config.ff_mult) * d;
  g.emb = Matrix::Zero(vocab_rows, d);
  g.pos = Matrix::Zero(body.pos.rows(), d);
  g.layers.resize(body.layers.size());
  for (LayerGrads& lg : g.layers) {
    lg.ln1_g = Vector::Zero(d);
    lg.ln1_b = Vector::Zero(d);
    lg.ln2_g = Vector::Zero(d);
    lg.ln2_b = Vector::Zero(d);
    lg.wq = Matrix::Zero(d, d);
    lg.wk = Matrix::Zero(d, d);
    lg.wv = Matrix::Zero(d, d);
    lg.wo = Matrix::Zero(d, d);
    lg.w1 = Matrix::Zero(d, ff);
    lg.b1 = Vector::Zero(ff);
    lg.w2 = Matrix::Zero(ff, d);
    lg.b2 = Vector::Zero(d);
  }
  g.lnf_g = Vector::Zero(d);
  g.lnf_b = Vector::Zero(d);
  g.head = Matrix::Zero(body.head.rows(), d);
  g.head_b = Vector::Zero(body.head_b.size());
  return g;
}

struct LnCache {
  Matrix xhat;
  Vector inv;
};

Matrix layer_norm(const Matrix& x, const Vector& g, const Vector& b, LnCache& cache) {
  Eigen::Index t_len = x.rows(), d = x.cols();
  cache.xhat.resize(t_len, d);
  cache.inv.resize(t_len);
  Matrix out(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    double mu = x.row(t).mean();
    double var = (x.row(t).array() - mu).square().mean();
    double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv(t) = inv;
    cache.xhat.row(t) = ((x.row(t).array() - mu) * inv).matrix();
    out.row(t) = cache.xhat.row(t).cwiseProduct(g.transpose()) + b.transpose();
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& dy, const LnCache& cache, const Vector& g, Vector& dg,
                           Vector& db) {
  Eigen::Index t_len = dy.rows(), d = dy.cols();
  Matrix dx(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(g.transpose());
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(cache.xhat.row(t)).mean();
    dx.row(t) = (cache.inv(t) * (dxhat.array() - m1 - cache.xhat.row(t).array() * m2)).matrix();
    dg += dy.row(t).cwiseProduct(cache.xhat.row(t)).transpose();
    db += dy.row(t).transpose();
  }
  return dx;
}

struct LayerCache {
  LnCache ln1;
  Matrix a;
  Matrix q, k, v;
  std::vector<Matrix> att;  // per head, causal softmax probs
  Matrix concat;
  LnCache ln2;
  Matrix b;
  Matrix h_pre;
  Matrix h_act;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  LnCache lnf;
};

// Runs the body and returns the final-layernorm output Y (T x d). Callers
// project with the head as needed.
Matrix forward_body(const BodyParams& body, const Matrix& emb, const std::vector<size_t>& ids) {
  Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
  Eigen::Index d = body.config.d;
  int heads = body.config.heads;
  Eigen::Index hd = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  if (t_len == 0) fail(Errc::invalid_config, "empty token sequence");
  if (t_len > body.pos.rows())
    fail(Errc::context_overflow, "sequence length " + std::to_string(t_len) +
                                     " exceeds context " + std::to_string(body.pos.rows()));

  Matrix x(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    size_t id = ids[static_cast<size_t>(t)];
    if (id >= static_cast<size_t>(emb.rows()))
      fail(Errc::out_of_range, "token id " + std::to_string(id));
    x.row(t) = emb.row(static_cast<Eigen::Index>(id)) + body.pos.row(t);
  }

  LnCache scratch;
  for (const LayerParams& p : body.layers) {
    Matrix a = layer_norm(x, p.ln1_g, p.ln1_b, scratch);
    Matrix q = a * p.wq;
    Matrix k = a * p.wk;
    Matrix v = a * p.wv;

    Matrix concat(t_len, d);
    for (int h = 0; h < heads; ++h) {
      Matrix scores = q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose() * scale;
      for (Eigen::Index i = 0; i < t_len; ++i)
        for (Eigen::Index j = i + 1; j < t_len; ++j) scores(i, j) = kMaskValue;
      for (Eigen::Index i = 0; i < t_len; ++i) {
        double m = scores.row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(i).array() - m).exp().matrix();
        scores.row(i) = e / e.sum();
      }
      concat.middleCols(h * hd, hd) = scores * v.middleCols(h * hd, hd);
    }
    Matrix x_mid = x + concat * p.wo;

    Matrix b = layer_norm(x_mid, p.ln2_g, p.ln2_b, scratch);
    Matrix h_pre = (b * p.w1).rowwise() + p.b1.transpose();
    Matrix h_act = h_pre.unaryExpr([](double u) { return gelu(u); });
    x = x_mid + ((h_act * p.w2).rowwise() + p.b2.transpose());
  }

  return layer_norm(x, body.lnf_g, body.lnf_b, scratch);
}

struct BodyActivations {
  ForwardCache cache;
};

Matrix forward_body_full(const BodyParams& body, const Matrix& emb,
                         const std::vector<size_t>& ids, BodyActivations& act) {
  // Same as forward_body but keeps the per-layer tensors backward needs.
  Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
  Eigen::Index d = body.config.d;
  int heads = body.config.heads;
  Eigen::Index hd = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  if (t_len == 0) fail(Errc::invalid_config, "empty token sequence");
  if (t_len > body.pos.rows())
    fail(Errc::context_overflow, "sequence length " + std::to_string(t_len) +
                                     " exceeds context " + std::to_string(body.pos.rows()));

  Matrix x(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    size_t id = ids[static_cast<size_t>(t)];
    if (id >= static_cast<size_t>(emb.rows()))
      fail(Errc::out_of_range, "token id " + std::to_string(id));
    x.row(t) = emb.row(static_cast<Eigen::Index>(id)) + body.pos.row(t);
  }
  act.cache.layers.resize(body.layers.size());

  for (size_t l = 0; l < body.layers.size(); ++l) {
    const LayerParams& p = body.layers[l];
    LayerCache& lc = act.cache.layers[l];

    Matrix a = layer_norm(x, p.ln1_g, p.ln1_b, lc.ln1);
    Matrix q = a * p.wq;
    Matrix k = a * p.wk;
    Matrix v = a * p.wv;

    Matrix concat(t_len, d);
    lc.att.resize(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Matrix scores = q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose() * scale;
      for (Eigen::Index i = 0; i < t_len; ++i)
        for (Eigen::Index j = i + 1; j < t_len; ++j) scores(i, j) = kMaskValue;
      for (Eigen::Index i = 0; i < t_len; ++i) {
        double m = scores.row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(i).array() - m).exp().matrix();
        scores.row(i) = e / e.sum();
      }
      concat.middleCols(h * hd, hd) = scores * v.middleCols(h * hd, hd);
      lc.att[static_cast<size_t>(h)] = std::move(scores);
    }
    Matrix x_mid = x + concat * p.wo;

    Matrix b = layer_norm(x_mid, p.ln2_g, p.ln2_b, lc.ln2);
    Matrix h_pre = (b * p.w1).rowwise() + p.b1.transpose();
    Matrix h_act = h_pre.unaryExpr([](double u) { return gelu(u); });
    Matrix x_out = x_mid + ((h_act * p.w2).rowwise() + p.b2.transpose());

    lc.a = std::move(a);
    lc.q = std::move(q);
    lc.k = std::move(k);
    lc.v = std::move(v);
    lc.concat = std::move(concat);
    lc.b = std::move(b);
    lc.h_pre = std::move(h_pre);
    lc.h_act = std::move(h_act);
    x = std::move(x_out);
  }

  return layer_norm(x, body.lnf_g, body.lnf_b, act.cache.lnf);
}

void backward_body(const BodyParams& body, const std::vector<size_t>& ids,
                   const BodyActivations& act, const Matrix& dy, Grads& grads) {
  Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
  Eigen::Index d = body.config.d;
  int heads = body.config.heads;
  Eigen::Index hd = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix dx = layer_norm_backward(dy, act.cache.lnf, body.lnf_g, grads.lnf_g, grads.lnf_b);

  for (size_t li = body.layers.size(); li-- > 0;) {
    const LayerParams& p = body.layers[li];
    const LayerCache& lc = act.cache.layers[li];
    LayerGrads& lg = grads.layers[li];

    // feed-forward branch (dx carries d x_out)
    lg.b2 += dx.colwise().sum().transpose();
    lg.w2 += lc.h_act.transpose() * dx;
    Matrix dh = dx * p.w2.transpose();
    Matrix dh_pre = dh.cwiseProduct(lc.h_pre.unaryExpr([](double u) { return gelu_grad(u); }));
    lg.b1 += dh_pre.colwise().sum().transpose();
    lg.w1 += lc.b.transpose() * dh_pre;
    Matrix d_ln2_in = dh_pre * p.w1.transpose();
    Matrix dx_mid = dx + layer_norm_backward(d_ln2_in, lc.ln2, p.ln2_g, lg.ln2_g, lg.ln2_b);

    // attention branch
    lg.wo += lc.concat.transpose() * dx_mid;
    Matrix d_concat = dx_mid * p.wo.transpose();

    Matrix dq(t_len, d), dk(t_len, d), dv(t_len, d);
    for (int h = 0; h < heads; ++h) {
      const Matrix& att = lc.att[static_cast<size_t>(h)];
      Matrix d_oh = d_concat.middleCols(h * hd, hd);
      Matrix d_att = d_oh * lc.v.middleCols(h * hd, hd).transpose();
      dv.middleCols(h * hd, hd) = att.transpose() * d_oh;
      Matrix ds(t_len, t_len);
      for (Eigen::Index i = 0; i < t_len; ++i) {
        double dot = d_att.row(i).cwiseProduct(att.row(i)).sum();
        ds.row(i) = (att.row(i).array() * (d_att.row(i).array() - dot)).matrix();
      }
      dq.middleCols(h * hd, hd) = ds * lc.k.middleCols(h * hd, hd) * scale;
      dk.middleCols(h * hd, hd) = ds.transpose() * lc.q.middleCols(h * hd, hd) * scale;
    }
    lg.wq += lc.a.transpose() * dq;
    lg.wk += lc.a.transpose() * dk;
    lg.wv += lc.a.transpose() * dv;
    Matrix da = dq * p.wq.transpose() + dk * p.wk.transpose() + dv * p.wv.transpose();
    dx = dx_mid + layer_norm_backward(da, lc.ln1, p.ln1_g, lg.ln1_g, lg.ln1_b);
  }

  for (Eigen::Index t = 0; t < t_len; ++t) {
    grads.emb.row(static_cast<Eigen::Index>(ids[static_cast<size_t>(t)])) += dx.row(t);
    grads.pos.row(t) += dx.row(t);
  }
}

// Weighted next-token cross-entropy: position t (predicting ids[t+1]) adds
// weight[t] * (-log p(ids[t+1])). weight has length T-1. Gradients optional.
// per_position, when given, receives the raw log p(ids[t+1]) at each position
// with nonzero weight (zero elsewhere).
double weighted_ce(const BodyParams& body, const Matrix& emb, const std::vector<size_t>& ids,
                   const std::vector<double>& weight, Grads* grads,
                   std::vector<double>* per_position) {
  Eigen::Index t_len = static_cast<Eigen::Index>(ids.size());
  BodyActivations act;
  Matrix y = grads ? forward_body_full(body, emb, ids, act) : forward_body(body, emb, ids);

  double loss = 0.0;
  Matrix dy;
  if (grads) dy = Matrix::Zero(t_len, body.config.d);
  if (per_position) per_position->assign(weight.size(), 0.0);

  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    double w = weight[static_cast<size_t>(t)];
    if (w == 0.0) continue;
    size_t target = ids[static_cast<size_t>(t + 1)];
    Vector logits = body.head * y.row(t).transpose() + body.head_b;
    double m = logits.maxCoeff();
    double lse = m + std::log((logits.array() - m).exp().sum());
    double lp = logits(static_cast<Eigen::Index>(target)) - lse;
    loss += w * (-lp);
    if (per_position) (*per_position)[static_cast<size_t>(t)] = lp;
    if (grads) {
      Vector probs = (logits.array() - lse).exp().matrix();
      Vector dlogits = w * probs;
      dlogits(static_cast<Eigen::Index>(target)) -= w;
      grads->head += dlogits * y.row(t);
      grads->head_b += dlogits;
      dy.row(t) += (body.head.transpose() * dlogits).transpose();
    }
  }
  if (grads) backward_body(body, ids, act, dy, *grads);
  return loss;
}

void check_response_ids(const ModelHandle& model, const std::vector<size_t>& response_ids) {
  for (size_t id : response_ids) {
    if (id >= model.vocab().size()) fail(Errc::out_of_range, "token id " + std::to_string(id));
    if (id >= model.base_size())
      fail(Errc::neologism_in_response,
           "response contains neologism token \"" + model.vocab().surface(id) + "\"");
  }
}

std::vector<size_t> concat_ids(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  std::vector<size_t> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// ---- parameter initialization and Adam ----

void init_body(BodyParams& body, Rng& rng) {
  const ReferenceModelConfig& c = body.config;
  Eigen::Index d = c.d;
  Eigen::Index ff = static_cast<Eigen::Index>(c.ff_mult) * d;
  auto randn_matrix = [&](Eigen::Index r, Eigen::Index cols) {
    Matrix m(r, cols);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 0.02 * rng.normal();
    return m;
  };
  body.pos = randn_matrix(c.context_len, d);
  body.layers.resize(static_cast<size_t>(c.layers));
  for (LayerParams& p : body.layers) {
    p.ln1_g = Vector::Ones(d);
    p.ln1_b = Vector::Zero(d);
    p.ln2_g = Vector::Ones(d);
    p.ln2_b = Vector::Zero(d);
    p.wq = randn_matrix(d, d);
    p.wk = randn_matrix(d, d);
    p.wv = randn_matrix(d, d);
    p.wo = randn_matrix(d, d);
    p.w1 = randn_matrix(d, ff);
    p.b1 = Vector::Zero(ff);
    p.w2 = randn_matrix(ff, d);
    p.b2 = Vector::Zero(d);
  }
  body.lnf_g = Vector::Ones(d);
  body.lnf_b = Vector::Zero(d);
  // head rows are filled by the caller (base size known there)
}

struct ParamRefs {
  std::vector<Matrix*> mats;
  std::vector<Vector*> vecs;
};

ParamRefs collect_refs(BodyParams& body, Matrix& emb) {
  ParamRefs r;
  r.mats.push_back(&emb);
  r.mats.push_back(&body.pos);
  for (LayerParams& p : body.layers) {
    r.vecs.push_back(&p.ln1_g);
    r.vecs.push_back(&p.ln1_b);
    r.vecs.push_back(&p.ln2_g);
    r.vecs.push_back(&p.ln2_b);
    r.mats.push_back(&p.wq);
    r.mats.push_back(&p.wk);
    r.mats.push_back(&p.wv);
    r.mats.push_back(&p.wo);
    r.mats.push_back(&p.w1);
    r.vecs.push_back(&p.b1);
    r.mats.push_back(&p.w2);
    r.vecs.push_back(&p.b2);
  }
  r.vecs.push_back(&body.lnf_g);
  r.vecs.push_back(&body.lnf_b);
  r.mats.push_back(&body.head);
  r.vecs.push_back(&body.head_b);
  return r;
}

ParamRefs collect_grad_refs(Grads& g) {
  ParamRefs r;
  r.mats.push_back(&g.emb);
  r.mats.push_back(&g.pos);
  for (LayerGrads& lg : g.layers) {
    r.vecs.push_back(&lg.ln1_g);
    r.vecs.push_back(&lg.ln1_b);
    r.vecs.push_back(&lg.ln2_g);
    r.vecs.push_back(&lg.ln2_b);
    r.mats.push_back(&lg.wq);
    r.mats.push_back(&lg.wk);
    r.mats.push_back(&lg.wv);
    r.mats.push_back(&lg.wo);
    r.mats.push_back(&lg.w1);
    r.vecs.push_back(&lg.b1);
    r.mats.push_back(&lg.w2);
    r.vecs.push_back(&lg.b2);
  }
  r.vecs.push_back(&g.lnf_g);
  r.vecs.push_back(&g.lnf_b);
  r.mats.push_back(&g.head);
  r.vecs.push_back(&g.head_b);
  return r;
}

void zero_refs(ParamRefs& refs) {
  for (Matrix* m : refs.mats) m->setZero();
  for (Vector* v : refs.vecs) v->setZero();
}

struct AdamState {
  std::vector<Matrix> m_mats, v_mats;
  std::vector<Vector> m_vecs, v_vecs;
  int64_t t = 0;

  explicit AdamState(const ParamRefs& refs) {
    for (Matrix* p : refs.mats) {
      m_mats.emplace_back(Matrix::Zero(p->rows(), p->cols()));
      v_mats.emplace_back(Matrix::Zero(p->rows(), p->cols()));
    }
    for (Vector* p : refs.vecs) {
      m_vecs.emplace_back(Vector::Zero(p->size()));
      v_vecs.emplace_back(Vector::Zero(p->size()));
    }
  }

  void step(ParamRefs& params, ParamRefs& grads, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    double corr = std::sqrt(1.0 - std::pow(b2, static_cast<double>(t))) /
                  (1.0 - std::pow(b1, static_cast<double>(t)));
    for (size_t i = 0; i < params.mats.size(); ++i) {
      Matrix& g = *grads.mats[i];
      m_mats[i] = b1 * m_mats[i] + (1 - b1) * g;
      v_mats[i] = b2 * v_mats[i] + (1 - b2) * g.cwiseProduct(g);
      params.mats[i]->array() -=
          lr * corr * m_mats[i].array() / (v_mats[i].array().sqrt() + eps);
    }
    for (size_t i = 0; i < params.vecs.size(); ++i) {
      Vector& g = *grads.vecs[i];
      m_vecs[i] = b1 * m_vecs[i] + (1 - b1) * g;
      v_vecs[i] = b2 * v_vecs[i] + (1 - b2) * g.cwiseProduct(g);
      params.vecs[i]->array() -=
          lr * corr * m_vecs[i].array() / (v_vecs[i].array().sqrt() + eps);
    }
  }
};

// ---- binary serialization helpers ----

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, int32_t v) {
  put_u64(out, static_cast<uint64_t>(static_cast<uint32_t>(v)));
}

void put_double(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

void put_matrix(std::string& out, const Matrix& m) {
  put_u64(out, static_cast<uint64_t>(m.rows()));
  put_u64(out, static_cast<uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_double(out, m(i, j));
}

void put_vector(std::string& out, const Vector& v) {
  put_u64(out, static_cast<uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_double(out, v(i));
}

struct Reader {
  std::string_view data;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > data.size()) fail(Errc::io_error, "truncated model file");
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(static_cast<uint32_t>(u64())); }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string str() {
    uint64_t n = u64();
    need(n);
    std::string s(data.substr(pos, n));
    pos += n;
    return s;
  }
  Matrix matrix() {
    uint64_t r = u64(), c = u64();
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
    return m;
  }
  Vector vector() {
    uint64_t n = u64();
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
};

void hash_matrix(Fnv1a& h, const Matrix& m) {
  h.update_u64(static_cast<uint64_t>(m.rows()));
  h.update_u64(static_cast<uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) h.update_double(m(i, j));
}

void hash_vector(Fnv1a& h, const Vector& v) {
  h.update_u64(static_cast<uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) h.update_double(v(i));
}

}  // namespace

void ReferenceModelConfig::validate() const {
  if (d < 1 || layers < 1 || heads < 1 || ff_mult < 1 || context_len < 1)
    fail(Errc::invalid_config, "all model dimensions must be >= 1");
  if (d % heads != 0)
    fail(Errc::invalid_config, "d=" + std::to_string(d) + " is not divisible by heads=" +
                                   std::to_string(heads));
  if (pretrain_steps < 0 || pretrain_batch < 1 || pretrain_lr <= 0)
    fail(Errc::invalid_config, "bad pretraining settings");
}

std::string ReferenceModelConfig::cache_key() const {
  Fnv1a h;
  h.update_u64(static_cast<uint64_t>(d));
  h.update_u64(static_cast<uint64_t>(layers));
  h.update_u64(static_cast<uint64_t>(heads));
  h.update_u64(static_cast<uint64_t>(ff_mult));
  h.update_u64(static_cast<uint64_t>(context_len));
  h.update_u64(seed);
  h.update_u64(static_cast<uint64_t>(pretrain_steps));
  h.update_u64(static_cast<uint64_t>(pretrain_batch));
  h.update_double(pretrain_lr);
  return h.hex();
}

uint64_t BodyParams::checksum() const {
  Fnv1a h;
  h.update_u64(static_cast<uint64_t>(config.d));
  h.update_u64(static_cast<uint64_t>(config.layers));
  h.update_u64(static_cast<uint64_t>(config.heads));
  h.update_u64(static_cast<uint64_t>(config.ff_mult));
  h.update_u64(static_cast<uint64_t>(config.context_len));
  hash_matrix(h, pos);
  for (const LayerParams& p : layers) {
    hash_vector(h, p.ln1_g);
    hash_vector(h, p.ln1_b);
    hash_vector(h, p.ln2_g);
    hash_vector(h, p.ln2_b);
    hash_matrix(h, p.wq);
    hash_matrix(h, p.wk);
    hash_matrix(h, p.wv);
    hash_matrix(h, p.wo);
    hash_matrix(h, p.w1);
    hash_vector(h, p.b1);
    hash_matrix(h, p.w2);
    hash_vector(h, p.b2);
  }
  hash_vector(h, lnf_g);
  hash_vector(h, lnf_b);
  hash_matrix(h, head);
  hash_vector(h, head_b);
  return h.digest();
}

ModelHandle::ModelHandle(std::shared_ptr<const BodyParams> body,
                         std::shared_ptr<const ExpandedVocabulary> vocab, Matrix embeddings,
                         ChatMarkers markers)
    : body_(std::move(body)),
      vocab_(std::move(vocab)),
      tokenizer_(std::make_shared<LongestMatchTokenizer>(vocab_->base())),
      embeddings_(std::move(embeddings)),
      markers_(std::move(markers)) {
  if (static_cast<size_t>(embeddings_.rows()) != vocab_->size())
    fail(Errc::invalid_config, "embedding rows do not match vocabulary size");
}

ModelHandle ModelHandle::with_rows(const std::map<size_t, Vector>& rows) const {
  Matrix emb = embeddings_;
  for (const auto& [id, row] : rows) {
    if (id < base_size() || id >= vocab_->size())
      fail(Errc::not_a_neologism_row, "id " + std::to_string(id));
    if (row.size() != emb.cols()) fail(Errc::invalid_config, "row dimension mismatch");
    emb.row(static_cast<Eigen::Index>(id)) = row.transpose();
  }
  ModelHandle out = *this;
  out.embeddings_ = std::move(emb);
  return out;
}

ModelHandle ModelHandle::with_embeddings(Matrix embeddings) const {
  if (embeddings.rows() != embeddings_.rows() || embeddings.cols() != embeddings_.cols())
    fail(Errc::invalid_config, "embedding shape mismatch");
  ModelHandle out = *this;
  out.embeddings_ = std::move(embeddings);
  return out;
}

std::vector<size_t> ModelHandle::encode_text(std::string_view text) const {
  return neoword::encode(text, *vocab_, *tokenizer_);
}

std::string ModelHandle::decode_ids(const std::vector<size_t>& ids) const {
  return neoword::decode(ids, *vocab_);
}

std::string ModelHandle::chat_prompt(std::string_view user_text) const {
  return markers_.user_open + std::string(user_text) + markers_.user_close + markers_.model_open;
}

std::optional<size_t> ModelHandle::close_token() const {
  if (markers_.model_close.empty()) return std::nullopt;
  std::vector<size_t> ids = encode_text(markers_.model_close);
  if (ids.size() == 1) return ids[0];
  return std::nullopt;
}

uint64_t ModelHandle::frozen_checksum() const {
  Fnv1a h;
  h.update_u64(body_->checksum());
  Eigen::Index base_rows = static_cast<Eigen::Index>(base_size());
  for (Eigen::Index i = 0; i < base_rows; ++i)
    for (Eigen::Index j = 0; j < embeddings_.cols(); ++j) h.update_double(embeddings_(i, j));
  return h.digest();
}

uint64_t ModelHandle::parameter_checksum() const {
  Fnv1a h;
  h.update_u64(frozen_checksum());
  for (Eigen::Index i = static_cast<Eigen::Index>(base_size()); i < embeddings_.rows(); ++i)
    for (Eigen::Index j = 0; j < embeddings_.cols(); ++j) h.update_double(embeddings_(i, j));
  return h.digest();
}

ModelHandle build_reference_model(const ReferenceModelConfig& config,
                                  std::shared_ptr<const ExpandedVocabulary> vocab,
                                  const std::vector<std::vector<size_t>>& corpus,
                                  ChatMarkers markers) {
  config.validate();
  if (!vocab) fail(Errc::invalid_config, "null vocabulary");
  if (corpus.empty()) fail(Errc::empty_dataset, "pretraining corpus is empty");
  size_t base = vocab->base_size();
  for (const auto& doc : corpus) {
    if (doc.size() < 2) fail(Errc::invalid_config, "corpus documents need >= 2 tokens");
    if (doc.size() > static_cast<size_t>(config.context_len))
      fail(Errc::context_overflow, "corpus document exceeds context length");
    for (size_t id : doc)
      if (id >= base) fail(Errc::invalid_config, "corpus contains non-base token ids");
  }

  auto body = std::make_shared<BodyParams>();
  body->config = config;
  Rng rng(Rng::mix(config.seed, 0x626f6479ull));
  init_body(*body, rng);
  Eigen::Index d = config.d;
  Eigen::Index base_rows = static_cast<Eigen::Index>(base);
  body->head = Matrix(base_rows, d);
  for (Eigen::Index i = 0; i < base_rows; ++i)
    for (Eigen::Index j = 0; j < d; ++j) body->head(i, j) = 0.02 * rng.normal();
  body->head_b = Vector::Zero(base_rows);

  Matrix emb(base_rows, d);
  for (Eigen::Index i = 0; i < base_rows; ++i)
    for (Eigen::Index j = 0; j < d; ++j) emb(i, j) = 0.02 * rng.normal();

  if (config.pretrain_steps > 0) {
    ParamRefs params = collect_refs(*body, emb);
    Grads grads = zero_grads(*body, base_rows);
    ParamRefs grad_refs = collect_grad_refs(grads);
    AdamState adam(params);
    Rng batch_rng(Rng::mix(config.seed, 0x6261746368ull));
    for (int step = 0; step < config.pretrain_steps; ++step) {
      zero_refs(grad_refs);
      for (int b = 0; b < config.pretrain_batch; ++b) {
        const std::vector<size_t>& doc = corpus[batch_rng.uniform_int(corpus.size())];
        std::vector<double> w(doc.size() - 1,
                              1.0 / (static_cast<double>(doc.size() - 1) *
                                     static_cast<double>(config.pretrain_batch)));
        weighted_ce(*body, emb, doc, w, &grads, nullptr);
      }
      adam.step(params, grad_refs, config.pretrain_lr);
    }
  }

  Matrix expanded = expand_embeddings(emb, *vocab);
  return ModelHandle(std::move(body), std::move(vocab), std::move(expanded), std::move(markers));
}

std::pair<double, std::vector<double>> sequence_logprob(const ModelHandle& model,
                                                        const std::vector<size_t>& prompt_ids,
                                                        const std::vector<size_t>& response_ids) {
  check_response_ids(model, response_ids);
  if (prompt_ids.empty()) fail(Errc::invalid_config, "empty prompt");
  if (response_ids.empty()) return {0.0, {}};
  std::vector<size_t> ids = concat_ids(prompt_ids, response_ids);
  std::vector<double> w(ids.size() - 1, 0.0);
  for (size_t t = prompt_ids.size() - 1; t + 1 < ids.size(); ++t) w[t] = 1.0;
  std::vector<double> per_position;
  weighted_ce(model.body(), model.embeddings(), ids, w, nullptr, &per_position);
  std::vector<double> per_token;
  per_token.reserve(response_ids.size());
  double total = 0.0;
  for (size_t t = prompt_ids.size() - 1; t + 1 < ids.size(); ++t) {
    per_token.push_back(per_position[t]);
    total += per_position[t];
  }
  return {total, per_token};
}

std::pair<double, Matrix> sequence_logprob_grad(const ModelHandle& model,
                                                const std::vector<size_t>& prompt_ids,
                                                const std::vector<size_t>& response_ids) {
  check_response_ids(model, response_ids);
  if (prompt_ids.empty()) fail(Errc::invalid_config, "empty prompt");
  Eigen::Index rows = model.embeddings().rows();
  Eigen::Index cols = model.embeddings().cols();
  if (response_ids.empty()) return {0.0, Matrix::Zero(rows, cols)};
  std::vector<size_t> ids = concat_ids(prompt_ids, response_ids);
  std::vector<double> w(ids.size() - 1, 0.0);
  for (size_t t = prompt_ids.size() - 1; t + 1 < ids.size(); ++t) w[t] = 1.0;
  Grads grads = zero_grads(model.body(), rows);
  double nll = weighted_ce(model.body(), model.embeddings(), ids, w, &grads, nullptr);
  return {-nll, -grads.emb};
}

Vector next_token_logits(const ModelHandle& model, const std::vector<size_t>& ids) {
  Matrix y = forward_body(model.body(), model.embeddings(), ids);
  return model.body().head * y.row(y.rows() - 1).transpose() + model.body().head_b;
}

std::vector<size_t> generate(const ModelHandle& model, const std::vector<size_t>& prompt_ids,
                             const DecodeConfig& config) {
  if (prompt_ids.empty()) fail(Errc::invalid_config, "empty prompt");
  if (config.max_new_tokens < 1) fail(Errc::invalid_config, "max_new_tokens must be >= 1");
  if (config.strategy == DecodeConfig::Strategy::sample && config.temperature <= 0)
    fail(Errc::invalid_config, "temperature must be > 0 when sampling");
  size_t limit = static_cast<size_t>(model.body().config.context_len);
  if (prompt_ids.size() + config.max_new_tokens > limit)
    fail(Errc::context_overflow,
         "prompt length " + std::to_string(prompt_ids.size()) + " + max_new_tokens " +
             std::to_string(config.max_new_tokens) + " exceeds context " + std::to_string(limit));

  std::vector<size_t> ids = prompt_ids;
  std::vector<size_t> out;
  Rng rng(config.seed);
  for (size_t step = 0; step < config.max_new_tokens; ++step) {
    Vector logits = next_token_logits(model, ids);
    size_t pick = 0;
    if (config.strategy == DecodeConfig::Strategy::greedy) {
      double best = logits(0);
      for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits(i) > best) {
          best = logits(i);
          pick = static_cast<size_t>(i);
        }
    } else {
      Vector scaled = logits / config.temperature;
      double m = scaled.maxCoeff();
      Vector probs = (scaled.array() - m).exp().matrix();
      probs /= probs.sum();
      double u = rng.uniform();
      double acc = 0.0;
      pick = static_cast<size_t>(probs.size() - 1);
      for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) {
          pick = static_cast<size_t>(i);
          break;
        }
      }
    }
    if (config.stop_token && pick == *config.stop_token) break;
    out.push_back(pick);
    ids.push_back(pick);
  }
  return out;
}

std::string respond(const ModelHandle& model, std::string_view user_text,
                    const DecodeConfig& config) {
  DecodeConfig cfg = config;
  if (!cfg.stop_token) cfg.stop_token = model.close_token();
  std::vector<size_t> prompt_ids = model.encode_text(model.chat_prompt(user_text));
  return model.decode_ids(generate(model, prompt_ids, cfg));
}

std::string forced_prefix_generate(const ModelHandle& model, std::string_view user_text,
                                   std::string_view forced_model_prefix,
                                   const DecodeConfig& config) {
  DecodeConfig cfg = config;
  if (!cfg.stop_token) cfg.stop_token = model.close_token();
  std::string prompt = model.chat_prompt(user_text) + std::string(forced_model_prefix);
  std::vector<size_t> prompt_ids = model.encode_text(prompt);
  std::vector<size_t> cont = generate(model, prompt_ids, cfg);
  return std::string(forced_model_prefix) + model.decode_ids(cont);
}

std::map<size_t, Vector> loss_gradient_new_rows(const ModelHandle& model,
                                                const EmbeddingLoss& loss,
                                                const std::vector<size_t>& new_row_ids) {
  for (size_t id : new_row_ids) {
    if (id < model.base_size() || id >= model.vocab().size())
      fail(Errc::not_a_neologism_row, "id " + std::to_string(id) + " is not a neologism row");
  }
  Matrix grad = Matrix::Zero(model.embeddings().rows(), model.embeddings().cols());
  loss.add_gradient(model.embeddings(), grad);
  std::map<size_t, Vector> out;
  for (size_t id : new_row_ids) out[id] = grad.row(static_cast<Eigen::Index>(id)).transpose();
  return out;
}

void save_model(const std::filesystem::path& path, const ModelHandle& model) {
  std::string out;
  out += "NEOWORD1";
  const ReferenceModelConfig& c = model.body().config;
  put_i32(out, c.d);
  put_i32(out, c.layers);
  put_i32(out, c.heads);
  put_i32(out, c.ff_mult);
  put_i32(out, c.context_len);
  put_u64(out, c.seed);
  put_i32(out, c.pretrain_steps);
  put_i32(out, c.pretrain_batch);
  put_double(out, c.pretrain_lr);

  const ChatMarkers& mk = model.markers();
  put_string(out, mk.user_open);
  put_string(out, mk.user_close);
  put_string(out, mk.model_open);
  put_string(out, mk.model_close);

  const ExpandedVocabulary& vocab = model.vocab();
  put_u64(out, vocab.base_size());
  for (size_t i = 0; i < vocab.base_size(); ++i) put_string(out, vocab.base().surface(i));
  put_u64(out, vocab.neologisms().size());
  for (const NeologismSpec& spec : vocab.neologisms()) {
    put_string(out, spec.surface);
    out.push_back(spec.init.kind == InitSource::Kind::token ? 0 : 1);
    if (spec.init.kind == InitSource::Kind::token)
      put_string(out, spec.init.token);
    else
      put_u64(out, spec.init.seed);
    put_string(out, spec.concept_name);
  }

  const BodyParams& body = model.body();
  put_matrix(out, body.pos);
  for (const LayerParams& p : body.layers) {
    put_vector(out, p.ln1_g);
    put_vector(out, p.ln1_b);
    put_vector(out, p.ln2_g);
    put_vector(out, p.ln2_b);
    put_matrix(out, p.wq);
    put_matrix(out, p.wk);
    put_matrix(out, p.wv);
    put_matrix(out, p.wo);
    put_matrix(out, p.w1);
    put_vector(out, p.b1);
    put_matrix(out, p.w2);
    put_vector(out, p.b2);
  }
  put_vector(out, body.lnf_g);
  put_vector(out, body.lnf_b);
  put_matrix(out, body.head);
  put_vector(out, body.head_b);
  put_matrix(out, model.embeddings());

  write_text_file(path, out);
}

ModelHandle load_model(const std::filesystem::path& path) {
  std::string blob = read_text_file(path);
  Reader r{blob};
  r.need(8);
  if (blob.substr(0, 8) != "NEOWORD1") fail(Errc::io_error, "not a model file: " + path.string());
  r.pos = 8;

  ReferenceModelConfig c;
  c.d = r.i32();
  c.layers = r.i32();
  c.heads = r.i32();
  c.ff_mult = r.i32();
  c.context_len = r.i32();
  c.seed = r.u64();
  c.pretrain_steps = r.i32();
  c.pretrain_batch = r.i32();
  c.pretrain_lr = r.f64();

  ChatMarkers mk;
  mk.user_open = r.str();
  mk.user_close = r.str();
  mk.model_open = r.str();
  mk.model_close = r.str();

  uint64_t base_count = r.u64();
  std::vector<std::string> surfaces;
  surfaces.reserve(base_count);
  for (uint64_t i = 0; i < base_count; ++i) surfaces.push_back(r.str());
  uint64_t neo_count = r.u64();
  std::vector<NeologismSpec> specs;
  for (uint64_t i = 0; i < neo_count; ++i) {
    NeologismSpec spec;
    spec.surface = r.str();
    r.need(1);
    char kind = r.data[r.pos++];
    if (kind == 0)
      spec.init = InitSource::from_token(r.str());
    else
      spec.init = InitSource::from_seed(r.u64());
    spec.concept_name = r.str();
    specs.push_back(std::move(spec));
  }
  auto vocab = std::make_shared<ExpandedVocabulary>(
      expand_vocabulary(Vocabulary(std::move(surfaces)), std::move(specs)));

  auto body = std::make_shared<BodyParams>();
  body->config = c;
  body->pos = r.matrix();
  body->layers.resize(static_cast<size_t>(c.layers));
  for (LayerParams& p : body->layers) {
    p.ln1_g = r.vector();
    p.ln1_b = r.vector();
    p.ln2_g = r.vector();
    p.ln2_b = r.vector();
    p.wq = r.matrix();
    p.wk = r.matrix();
    p.wv = r.matrix();
    p.wo = r.matrix();
    p.w1 = r.matrix();
    p.b1 = r.vector();
    p.w2 = r.matrix();
    p.b2 = r.vector();
  }
  body->lnf_g = r.vector();
  body->lnf_b = r.vector();
  body->head = r.matrix();
  body->head_b = r.vector();
  Matrix emb = r.matrix();

  return ModelHandle(std::move(body), std::move(vocab), std::move(emb), std::move(mk));
}

std::string ReferenceTextModel::respond(const std::string& user_text,
                                        const DecodeConfig& config) const {
  return neoword::respond(handle_, user_text, config);
}

std::string ReferenceTextModel::respond_with_prefix(const std::string& user_text,
                                                    const std::string& forced_prefix,
                                                    const DecodeConfig& config) const {
  return forced_prefix_generate(handle_, user_text, forced_prefix, config);
}

double ReferenceTextModel::response_logprob(const std::string& user_text,
                                            const std::string& response) const {
  std::vector<size_t> prompt_ids = handle_.encode_text(handle_.chat_prompt(user_text));
  std::vector<size_t> response_ids = handle_.encode_text(response);
  return sequence_logprob(handle_, prompt_ids, response_ids).first;
}

}  // namespace neoword
