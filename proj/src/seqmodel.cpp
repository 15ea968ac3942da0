#include "autogen/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "autogen/errors.hpp"

namespace autogen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& a) {
  return (1.0 + (-a.array()).exp()).inverse().matrix();
}

void validate_sequence(const ModelParameters& params, const TokenSequence& x,
                       const char* where) {
  if (x.empty()) throw InvalidInputError(std::string(where) + ": empty token sequence");
  for (TokenId id : x.ids) {
    if (id < 0 || id >= params.dims.vocab_size) {
      throw InvalidInputError(std::string(where) + ": token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(params.dims.vocab_size));
    }
  }
}

GruWeights gru_zeros(Index input, Index hidden) {
  return {MatrixXd::Zero(3 * hidden, input), MatrixXd::Zero(3 * hidden, hidden),
          VectorXd::Zero(3 * hidden)};
}

// Column-wise log-softmax in place.
void log_softmax_columns(MatrixXd& logits) {
  for (Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    const double mx = col.maxCoeff();
    const double lse = mx + std::log((col.array() - mx).exp().sum());
    col.array() -= lse;
  }
}

// Caches for one recurrent pass. Step t occupies columns [t*B, (t+1)*B).
struct GruTrace {
  MatrixXd h_prev;  // H x T*B
  MatrixXd reset;
  MatrixXd update;
  MatrixXd cand;
  MatrixXd hidden_cand_pre;  // W_hn h_prev
};

// One GRU step given the precomputed input projection (W_x x + b).
void gru_step_forward(const MatrixXd& w_hidden, const Eigen::Ref<const MatrixXd>& in_proj,
                      const Eigen::Ref<const MatrixXd>& h_prev, Index H,
                      Eigen::Ref<MatrixXd> r, Eigen::Ref<MatrixXd> u, Eigen::Ref<MatrixXd> n,
                      Eigen::Ref<MatrixXd> hn, MatrixXd& h_next) {
  MatrixXd ah = w_hidden * h_prev;
  r = sigmoid(in_proj.topRows(H) + ah.topRows(H));
  u = sigmoid(in_proj.middleRows(H, H) + ah.middleRows(H, H));
  hn = ah.bottomRows(H);
  n = (in_proj.bottomRows(H).array() + r.array() * hn.array()).tanh().matrix();
  h_next = ((1.0 - u.array()) * n.array() + u.array() * h_prev.array()).matrix();
}

// Backward through one GRU step. Writes d(in_proj) and d(W_h h_prev) for the
// step, and returns the gradient reaching h_prev.
MatrixXd gru_step_backward(const MatrixXd& w_hidden, const MatrixXd& dh,
                           const Eigen::Ref<const MatrixXd>& h_prev,
                           const Eigen::Ref<const MatrixXd>& r,
                           const Eigen::Ref<const MatrixXd>& u,
                           const Eigen::Ref<const MatrixXd>& n,
                           const Eigen::Ref<const MatrixXd>& hn, Index H,
                           Eigen::Ref<MatrixXd> d_in_proj, Eigen::Ref<MatrixXd> d_hidden_proj) {
  const auto dn = dh.array() * (1.0 - u.array());
  const auto du = dh.array() * (h_prev.array() - n.array());
  const auto dn_pre = (dn * (1.0 - n.array().square())).eval();
  const auto dr = dn_pre * hn.array();
  d_in_proj.topRows(H) = (dr * r.array() * (1.0 - r.array())).matrix();
  d_in_proj.middleRows(H, H) = (du * u.array() * (1.0 - u.array())).matrix();
  d_in_proj.bottomRows(H) = dn_pre.matrix();
  d_hidden_proj.topRows(2 * H) = d_in_proj.topRows(2 * H);
  d_hidden_proj.bottomRows(H) = (dn_pre * r.array()).matrix();
  MatrixXd dh_prev = (dh.array() * u.array()).matrix();
  dh_prev.noalias() += w_hidden.transpose() * d_hidden_proj;
  return dh_prev;
}

void scatter_add_columns(MatrixXd& table, const MatrixXd& grads,
                         const std::vector<TokenId>& ids) {
  for (Index c = 0; c < grads.cols(); ++c) table.col(ids[static_cast<std::size_t>(c)]) += grads.col(c);
}

// Forward state for a padded batch; kept for the backward pass.
struct BatchForward {
  Index B = 0, T_enc = 0, T_dec = 0;
  std::vector<Index> lengths;

  std::vector<TokenId> enc_tokens;  // T_enc*B, PAD beyond length
  Eigen::ArrayXd enc_mask;          // T_enc*B
  MatrixXd enc_x;                   // E x T_enc*B
  GruTrace enc;
  MatrixXd enc_final;               // H x B

  MatrixXd mu, logvar_raw, logvar, sigma, eps, z;  // D x B

  std::vector<TokenId> dec_tokens;  // T_dec*B decoder inputs after dropout
  std::vector<TokenId> targets;     // T_dec*B
  Eigen::ArrayXd dec_mask;          // T_dec*B
  MatrixXd dec_x;                   // E x T_dec*B
  MatrixXd h0;                      // H x B
  GruTrace dec;
  MatrixXd dec_out;                 // H x T_dec*B, hidden after each step
  MatrixXd log_probs;               // V x T_dec*B

  VectorXd recon;  // B
  VectorXd kl;     // B
};

BatchForward forward_batch(const ModelParameters& p, std::span<const TokenSequence> batch,
                           const BatchNoise& noise) {
  const Index H = p.dims.hidden_dim;
  const Index E = p.dims.embed_dim;
  const Index D = p.dims.latent_dim;

  BatchForward f;
  f.B = static_cast<Index>(batch.size());
  if (f.B == 0) throw InvalidInputError("empty batch");
  if (noise.eps.size() != batch.size() || noise.plans.size() != batch.size()) {
    throw InvalidInputError("noise does not match batch size");
  }
  for (const auto& x : batch) {
    validate_sequence(p, x, "batch");
    f.lengths.push_back(static_cast<Index>(x.size()));
  }
  const Index B = f.B;
  f.T_enc = *std::max_element(f.lengths.begin(), f.lengths.end());
  f.T_dec = f.T_enc + 1;

  // Encoder.
  f.enc_tokens.assign(static_cast<std::size_t>(f.T_enc * B), kPadId);
  f.enc_mask = Eigen::ArrayXd::Zero(f.T_enc * B);
  for (Index b = 0; b < B; ++b) {
    for (Index t = 0; t < f.lengths[b]; ++t) {
      f.enc_tokens[t * B + b] = batch[b].ids[t];
      f.enc_mask(t * B + b) = 1.0;
    }
  }
  f.enc_x.resize(E, f.T_enc * B);
  for (Index c = 0; c < f.T_enc * B; ++c) f.enc_x.col(c) = p.embedding.col(f.enc_tokens[c]);

  MatrixXd enc_proj = p.encoder.w_input * f.enc_x;
  enc_proj.colwise() += p.encoder.bias;
  f.enc.h_prev.resize(H, f.T_enc * B);
  f.enc.reset.resize(H, f.T_enc * B);
  f.enc.update.resize(H, f.T_enc * B);
  f.enc.cand.resize(H, f.T_enc * B);
  f.enc.hidden_cand_pre.resize(H, f.T_enc * B);
  MatrixXd h = MatrixXd::Zero(H, B);
  MatrixXd h_next;
  for (Index t = 0; t < f.T_enc; ++t) {
    const Index c0 = t * B;
    f.enc.h_prev.middleCols(c0, B) = h;
    gru_step_forward(p.encoder.w_hidden, enc_proj.middleCols(c0, B), h, H,
                     f.enc.reset.middleCols(c0, B), f.enc.update.middleCols(c0, B),
                     f.enc.cand.middleCols(c0, B), f.enc.hidden_cand_pre.middleCols(c0, B),
                     h_next);
    for (Index b = 0; b < B; ++b) {
      if (f.enc_mask(c0 + b) != 0.0) h.col(b) = h_next.col(b);
    }
  }
  f.enc_final = h;

  // Posterior and reparameterized sample.
  f.mu = p.w_mu * f.enc_final;
  f.mu.colwise() += p.b_mu;
  f.logvar_raw = p.w_logvar * f.enc_final;
  f.logvar_raw.colwise() += p.b_logvar;
  f.logvar = f.logvar_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  f.sigma = (0.5 * f.logvar.array()).exp().matrix();
  f.eps.resize(D, B);
  for (Index b = 0; b < B; ++b) {
    if (noise.eps[b].size() != D) throw InvalidInputError("noise dimension mismatch");
    f.eps.col(b) = noise.eps[b];
  }
  f.z = f.mu + f.sigma.cwiseProduct(f.eps);

  // Decoder.
  f.dec_tokens.assign(static_cast<std::size_t>(f.T_dec * B), kPadId);
  f.targets.assign(static_cast<std::size_t>(f.T_dec * B), kPadId);
  f.dec_mask = Eigen::ArrayXd::Zero(f.T_dec * B);
  for (Index b = 0; b < B; ++b) {
    const auto& ids = batch[b].ids;
    const auto& plan = noise.plans[b];
    if (static_cast<Index>(plan.replaced.size()) != f.lengths[b]) {
      throw InvalidInputError("dropout plan length does not match sequence length");
    }
    for (Index t = 0; t <= f.lengths[b]; ++t) {
      const Index c = t * B + b;
      if (t == 0) {
        f.dec_tokens[c] = kBosId;
      } else {
        f.dec_tokens[c] = plan.replaced[t - 1] ? kUnkId : ids[t - 1];
      }
      f.targets[c] = t < f.lengths[b] ? ids[t] : kEosId;
      f.dec_mask(c) = 1.0;
    }
  }
  f.dec_x.resize(E, f.T_dec * B);
  for (Index c = 0; c < f.T_dec * B; ++c) f.dec_x.col(c) = p.embedding.col(f.dec_tokens[c]);

  MatrixXd dec_proj = p.decoder.w_input.leftCols(E) * f.dec_x;
  MatrixXd z_proj = p.decoder.w_input.rightCols(D) * f.z;
  z_proj.colwise() += p.decoder.bias;
  for (Index t = 0; t < f.T_dec; ++t) dec_proj.middleCols(t * B, B) += z_proj;

  MatrixXd h0_pre = p.w_latent * f.z;
  h0_pre.colwise() += p.b_latent;
  f.h0 = h0_pre.array().tanh().matrix();

  f.dec.h_prev.resize(H, f.T_dec * B);
  f.dec.reset.resize(H, f.T_dec * B);
  f.dec.update.resize(H, f.T_dec * B);
  f.dec.cand.resize(H, f.T_dec * B);
  f.dec.hidden_cand_pre.resize(H, f.T_dec * B);
  f.dec_out.resize(H, f.T_dec * B);
  h = f.h0;
  for (Index t = 0; t < f.T_dec; ++t) {
    const Index c0 = t * B;
    f.dec.h_prev.middleCols(c0, B) = h;
    gru_step_forward(p.decoder.w_hidden, dec_proj.middleCols(c0, B), h, H,
                     f.dec.reset.middleCols(c0, B), f.dec.update.middleCols(c0, B),
                     f.dec.cand.middleCols(c0, B), f.dec.hidden_cand_pre.middleCols(c0, B),
                     h_next);
    h = h_next;
    f.dec_out.middleCols(c0, B) = h;
  }

  f.log_probs = p.w_out * f.dec_out;
  f.log_probs.colwise() += p.b_out;
  log_softmax_columns(f.log_probs);

  f.recon = VectorXd::Zero(B);
  for (Index c = 0; c < f.T_dec * B; ++c) {
    if (f.dec_mask(c) != 0.0) f.recon(c % B) += f.log_probs(f.targets[c], c);
  }
  f.kl = (0.5 * (f.mu.array().square() + f.logvar.array().exp() - 1.0 - f.logvar.array()))
             .colwise()
             .sum()
             .transpose()
             .matrix();
  f.kl = f.kl.cwiseMax(0.0);
  return f;
}

void backward_batch(const ModelParameters& p, const BatchForward& f, double c_recon,
                    double c_kl, ModelParameters& g) {
  const Index H = p.dims.hidden_dim;
  const Index E = p.dims.embed_dim;
  const Index D = p.dims.latent_dim;
  const Index B = f.B;
  const double scale_r = c_recon / static_cast<double>(B);
  const double scale_k = c_kl / static_cast<double>(B);

  // Output layer: d(-c R)/d logits = c (softmax - onehot) on scored positions.
  MatrixXd d_logits = f.log_probs.array().exp().matrix();
  for (Index c = 0; c < f.T_dec * B; ++c) {
    if (f.dec_mask(c) == 0.0) {
      d_logits.col(c).setZero();
    } else {
      d_logits(f.targets[c], c) -= 1.0;
      d_logits.col(c) *= scale_r;
    }
  }
  g.w_out.noalias() += d_logits * f.dec_out.transpose();
  g.b_out += d_logits.rowwise().sum();
  const MatrixXd d_dec_out = p.w_out.transpose() * d_logits;

  // Decoder recurrence.
  MatrixXd d_dec_proj(3 * H, f.T_dec * B);
  MatrixXd d_dec_hidden(3 * H, f.T_dec * B);
  MatrixXd dh = MatrixXd::Zero(H, B);
  for (Index t = f.T_dec - 1; t >= 0; --t) {
    const Index c0 = t * B;
    dh += d_dec_out.middleCols(c0, B);
    dh = gru_step_backward(p.decoder.w_hidden, dh, f.dec.h_prev.middleCols(c0, B),
                           f.dec.reset.middleCols(c0, B), f.dec.update.middleCols(c0, B),
                           f.dec.cand.middleCols(c0, B),
                           f.dec.hidden_cand_pre.middleCols(c0, B), H,
                           d_dec_proj.middleCols(c0, B), d_dec_hidden.middleCols(c0, B));
  }
  g.decoder.w_hidden.noalias() += d_dec_hidden * f.dec.h_prev.transpose();
  g.decoder.w_input.leftCols(E).noalias() += d_dec_proj * f.dec_x.transpose();
  g.decoder.bias += d_dec_proj.rowwise().sum();
  MatrixXd d_z_proj = MatrixXd::Zero(3 * H, B);
  for (Index t = 0; t < f.T_dec; ++t) d_z_proj += d_dec_proj.middleCols(t * B, B);
  g.decoder.w_input.rightCols(D).noalias() += d_z_proj * f.z.transpose();
  MatrixXd dz = p.decoder.w_input.rightCols(D).transpose() * d_z_proj;
  {
    const MatrixXd d_emb = p.decoder.w_input.leftCols(E).transpose() * d_dec_proj;
    scatter_add_columns(g.embedding, d_emb, f.dec_tokens);
  }

  // Initial state map.
  const MatrixXd d_h0_pre = (dh.array() * (1.0 - f.h0.array().square())).matrix();
  g.w_latent.noalias() += d_h0_pre * f.z.transpose();
  g.b_latent += d_h0_pre.rowwise().sum();
  dz.noalias() += p.w_latent.transpose() * d_h0_pre;

  // Reparameterization and KL.
  MatrixXd d_mu = dz + scale_k * f.mu;
  MatrixXd d_logvar = (0.5 * dz.array() * f.eps.array() * f.sigma.array() +
                       scale_k * 0.5 * (f.logvar.array().exp() - 1.0))
                          .matrix();
  for (Index i = 0; i < d_logvar.size(); ++i) {
    const double raw = f.logvar_raw(i);
    if (raw < kLogvarMin || raw > kLogvarMax) d_logvar(i) = 0.0;
  }
  g.w_mu.noalias() += d_mu * f.enc_final.transpose();
  g.b_mu += d_mu.rowwise().sum();
  g.w_logvar.noalias() += d_logvar * f.enc_final.transpose();
  g.b_logvar += d_logvar.rowwise().sum();
  dh = p.w_mu.transpose() * d_mu;
  dh.noalias() += p.w_logvar.transpose() * d_logvar;

  // Encoder recurrence; masked steps carry the gradient through unchanged.
  MatrixXd d_enc_proj(3 * H, f.T_enc * B);
  MatrixXd d_enc_hidden(3 * H, f.T_enc * B);
  for (Index t = f.T_enc - 1; t >= 0; --t) {
    const Index c0 = t * B;
    MatrixXd dh_step = dh;
    MatrixXd carry = MatrixXd::Zero(H, B);
    for (Index b = 0; b < B; ++b) {
      if (f.enc_mask(c0 + b) == 0.0) {
        carry.col(b) = dh.col(b);
        dh_step.col(b).setZero();
      }
    }
    dh = gru_step_backward(p.encoder.w_hidden, dh_step, f.enc.h_prev.middleCols(c0, B),
                           f.enc.reset.middleCols(c0, B), f.enc.update.middleCols(c0, B),
                           f.enc.cand.middleCols(c0, B),
                           f.enc.hidden_cand_pre.middleCols(c0, B), H,
                           d_enc_proj.middleCols(c0, B), d_enc_hidden.middleCols(c0, B));
    dh += carry;
  }
  g.encoder.w_hidden.noalias() += d_enc_hidden * f.enc.h_prev.transpose();
  g.encoder.w_input.noalias() += d_enc_proj * f.enc_x.transpose();
  g.encoder.bias += d_enc_proj.rowwise().sum();
  {
    const MatrixXd d_emb = p.encoder.w_input.transpose() * d_enc_proj;
    scatter_add_columns(g.embedding, d_emb, f.enc_tokens);
  }
}

template <typename Params, typename View>
std::vector<View> collect_tensors(Params& p) {
  auto view = [](std::string_view name, auto& m) {
    return View{name, {m.data(), static_cast<std::size_t>(m.size())}};
  };
  return {
      view("embedding", p.embedding),
      view("encoder.w_input", p.encoder.w_input),
      view("encoder.w_hidden", p.encoder.w_hidden),
      view("encoder.bias", p.encoder.bias),
      view("w_mu", p.w_mu),
      view("b_mu", p.b_mu),
      view("w_logvar", p.w_logvar),
      view("b_logvar", p.b_logvar),
      view("w_latent", p.w_latent),
      view("b_latent", p.b_latent),
      view("decoder.w_input", p.decoder.w_input),
      view("decoder.w_hidden", p.decoder.w_hidden),
      view("decoder.bias", p.decoder.bias),
      view("w_out", p.w_out),
      view("b_out", p.b_out),
  };
}

}  // namespace

ModelParameters ModelParameters::zeros(const ModelDims& dims) {
  if (dims.vocab_size <= 0 || dims.embed_dim <= 0 || dims.hidden_dim <= 0 ||
      dims.latent_dim <= 0) {
    throw InvalidInputError("model dimensions must be positive");
  }
  const Index V = dims.vocab_size, E = dims.embed_dim, H = dims.hidden_dim,
              D = dims.latent_dim;
  ModelParameters p;
  p.dims = dims;
  p.embedding = MatrixXd::Zero(E, V);
  p.encoder = gru_zeros(E, H);
  p.w_mu = MatrixXd::Zero(D, H);
  p.b_mu = VectorXd::Zero(D);
  p.w_logvar = MatrixXd::Zero(D, H);
  p.b_logvar = VectorXd::Zero(D);
  p.w_latent = MatrixXd::Zero(H, D);
  p.b_latent = VectorXd::Zero(H);
  p.decoder = gru_zeros(E + D, H);
  p.w_out = MatrixXd::Zero(V, H);
  p.b_out = VectorXd::Zero(V);
  return p;
}

std::vector<TensorView> ModelParameters::tensors() {
  return collect_tensors<ModelParameters, TensorView>(*this);
}

std::vector<ConstTensorView> ModelParameters::tensors() const {
  return collect_tensors<const ModelParameters, ConstTensorView>(*this);
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

bool ModelParameters::all_finite() const {
  for (const auto& t : tensors()) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool ModelParameters::operator==(const ModelParameters& other) const {
  if (!(dims == other.dims)) return false;
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].values.size() != b[i].values.size()) return false;
    if (std::memcmp(a[i].values.data(), b[i].values.data(),
                    a[i].values.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

DropoutPlan DropoutPlan::none(std::size_t length) {
  return {std::vector<bool>(length, false), 0.0, 0};
}

DropoutPlan DropoutPlan::all(std::size_t length) {
  return {std::vector<bool>(length, true), 1.0, 0};
}

DropoutPlan DropoutPlan::sample(std::size_t length, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidInputError("word dropout rate must lie in [0, 1)");
  DropoutPlan plan{std::vector<bool>(length, false), rate, seed};
  if (rate == 0.0) return plan;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(rate);
  for (std::size_t i = 0; i < length; ++i) plan.replaced[i] = drop(rng);
  return plan;
}

BatchNoise sample_batch_noise(std::span<const TokenSequence> batch, std::int64_t latent_dim,
                              double dropout_rate, std::uint64_t seed) {
  BatchNoise noise;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (const auto& x : batch) {
    VectorXd eps(latent_dim);
    for (Index i = 0; i < latent_dim; ++i) eps(i) = normal(rng);
    noise.eps.push_back(std::move(eps));
    noise.plans.push_back(DropoutPlan::sample(x.size(), dropout_rate, rng()));
  }
  return noise;
}

ModelParameters init_parameters(const ModelDims& dims, std::uint64_t seed) {
  ModelParameters p = ModelParameters::zeros(dims);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  for (auto& t : p.tensors()) {
    // Biases start at zero.
    const std::string_view name = t.name;
    if (name.find("bias") != std::string_view::npos || name.rfind("b_", 0) == 0) continue;
    for (double& v : t.values) v = uniform(rng);
  }
  return p;
}

GaussianPosterior encode(const ModelParameters& params, const TokenSequence& x) {
  validate_sequence(params, x, "encode");
  const TokenSequence batch[] = {x};
  BatchNoise noise{{VectorXd::Zero(params.dims.latent_dim)}, {DropoutPlan::none(x.size())}};
  // The decoder half is wasted work here; encode is not on the training path.
  const BatchForward f = forward_batch(params, batch, noise);
  return GaussianPosterior(f.mu.col(0), f.logvar_raw.col(0));
}

Eigen::MatrixXd decode_step_distributions(const ModelParameters& params,
                                          const Eigen::VectorXd& z,
                                          const TokenSequence& teacher_input,
                                          const DropoutPlan& plan) {
  validate_sequence(params, teacher_input, "decode_step_distributions");
  if (z.size() != params.dims.latent_dim) {
    throw InvalidInputError("decode_step_distributions: latent has dimension " +
                            std::to_string(z.size()) + ", expected " +
                            std::to_string(params.dims.latent_dim));
  }
  if (plan.replaced.size() != teacher_input.size()) {
    throw InvalidInputError("decode_step_distributions: dropout plan length mismatch");
  }
  DecoderStepper stepper(params, z);
  const Index L = static_cast<Index>(teacher_input.size());
  MatrixXd dists(params.dims.vocab_size, L + 1);
  VectorXd h = stepper.initial_hidden();
  VectorXd log_probs;
  for (Index t = 0; t <= L; ++t) {
    TokenId input = kBosId;
    if (t > 0) input = plan.replaced[t - 1] ? kUnkId : teacher_input.ids[t - 1];
    h = stepper.step(h, input, log_probs);
    dists.col(t) = log_probs.array().exp().matrix();
  }
  return dists;
}

double sequence_log_prob(const ModelParameters& params, const Eigen::VectorXd& z,
                         const TokenSequence& x, const DropoutPlan& plan) {
  const MatrixXd dists = decode_step_distributions(params, z, x, plan);
  double total = 0.0;
  for (Index t = 0; t < dists.cols(); ++t) {
    const TokenId target = t < static_cast<Index>(x.size()) ? x.ids[t] : kEosId;
    const double prob = dists(target, t);
    if (prob <= 0.0) return -std::numeric_limits<double>::infinity();
    total += std::log(prob);
  }
  return total;
}

SentenceScores score_batch(const ModelParameters& params, std::span<const TokenSequence> batch,
                           const BatchNoise& noise) {
  BatchForward f = forward_batch(params, batch, noise);
  return {std::move(f.recon), std::move(f.kl)};
}

LossAndGradients loss_and_gradients(const ModelParameters& params,
                                    std::span<const TokenSequence> batch,
                                    const ObjectiveConfig& config, const BatchNoise& noise,
                                    std::int64_t step) {
  const BatchForward f = forward_batch(params, batch, noise);
  const double recon = f.recon.mean();
  const double kl = f.kl.mean();
  if (!std::isfinite(recon) || !std::isfinite(kl)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << ": recon=" << recon << " kl=" << kl
        << " params_finite=" << (params.all_finite() ? "yes" : "no")
        << " max|mu|=" << f.mu.cwiseAbs().maxCoeff()
        << " max logvar_raw=" << f.logvar_raw.maxCoeff();
    throw DivergenceError(msg.str());
  }
  LossAndGradients out{assemble_objective(recon, kl, config, step),
                       ModelParameters::zeros(params.dims)};
  const auto [c_recon, c_kl] = config.coefficients(step);
  backward_batch(params, f, c_recon, c_kl, out.gradient);
  return out;
}

DecoderStepper::DecoderStepper(const ModelParameters& params, Eigen::VectorXd z)
    : params_(&params), z_(std::move(z)) {
  if (z_.size() != params.dims.latent_dim) {
    throw InvalidInputError("decoder latent has dimension " + std::to_string(z_.size()) +
                            ", expected " + std::to_string(params.dims.latent_dim));
  }
  latent_projection_ = params.decoder.w_input.rightCols(params.dims.latent_dim) * z_;
  latent_projection_ += params.decoder.bias;
}

Eigen::VectorXd DecoderStepper::initial_hidden() const {
  return (params_->w_latent * z_ + params_->b_latent).array().tanh().matrix();
}

Eigen::VectorXd DecoderStepper::step(const Eigen::VectorXd& hidden, TokenId input,
                                     Eigen::VectorXd& log_probs) const {
  const auto& p = *params_;
  const Index H = p.dims.hidden_dim;
  const Index E = p.dims.embed_dim;
  if (input < 0 || input >= p.dims.vocab_size) throw InvalidInputError("decoder input out of range");
  VectorXd in_proj = latent_projection_;
  in_proj.noalias() += p.decoder.w_input.leftCols(E) * p.embedding.col(input);
  const VectorXd ah = p.decoder.w_hidden * hidden;
  const VectorXd r = sigmoid(in_proj.head(H) + ah.head(H));
  const VectorXd u = sigmoid(in_proj.segment(H, H) + ah.segment(H, H));
  const VectorXd n = (in_proj.tail(H).array() + r.array() * ah.tail(H).array()).tanh().matrix();
  VectorXd next = ((1.0 - u.array()) * n.array() + u.array() * hidden.array()).matrix();
  MatrixXd logits = p.w_out * next + p.b_out;
  log_softmax_columns(logits);
  log_probs = logits.col(0);
  return next;
}

}  // namespace autogen
