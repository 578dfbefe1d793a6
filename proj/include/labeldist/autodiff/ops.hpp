#pragma once
// Differentiable operators. Activations use (batch, time, channel) layout;
// matrix operators flatten all leading axes into rows.

#include <span>
#include <vector>

#include "labeldist/autodiff/tape.hpp"
#include "labeldist/losses.hpp"

namespace labeldist::ad {

// Elementwise ----------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

// Reductions / reshaping -------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);
/// Frame t of x[B x T x C] as a [B x C] matrix.
Var time_frame(Var x, std::size_t t);
/// Frames [t0, t1) of x[B x T x C].
Var time_slice(Var x, std::size_t t0, std::size_t t1);
/// Stacks T matrices [B x C] into [B x T x C].
Var stack_time(std::span<const Var> frames);
/// Concatenates [B x Ti x C] pieces along time.
Var concat_time(std::span<const Var> pieces);

// Layers ---------------------------------------------------------------------
/// x[... x K] * w[K x N]
Var matmul(Var x, Var w);
/// x + b with b[C] broadcast over the trailing axis of x[... x C].
Var add_bias(Var x, Var b);
/// x w + b, x[... x D_in], w[D_in x D_out], b[D_out].
Var dense(Var x, Var w, Var b);
/// Valid (unpadded) 1-D convolution. x[B x T x C_in], kernels[k x C_in x C_out].
/// Output length floor((T - k) / stride) + 1; throws ShapeError if T < k.
Var conv1d(Var x, Var kernels, std::size_t stride);
/// Non-overlapping max over `window` frames; trailing frames are dropped.
/// Gradient goes to the first maximal element of each window.
Var maxpool1d(Var x, std::size_t window);
/// Inverted dropout: zero with probability p, rescale kept values by 1/(1-p).
/// Identity when !training or p == 0.
Var dropout(Var x, double p, bool training, Rng& rng);

/// Output length of conv1d / maxpool1d for a given input length.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride);
std::size_t maxpool1d_output_length(std::size_t length, std::size_t window);

// LSTM ---------------------------------------------------------------------------
/// Gate order i, f, g, o along the 4H axis.
struct LstmParams {
  Var w_input;   // [D x 4H]
  Var w_hidden;  // [H x 4H]
  Var bias;      // [4H]
};

struct LstmState {
  Var h;  // [B x H]
  Var c;  // [B x H]
};

/// Activated gates [B x 4H]: sigmoid(i), sigmoid(f), tanh(g), sigmoid(o).
Var lstm_gates(Var x, Var h, const LstmParams& params);
/// c' = f * c + i * g
Var lstm_cell(Var gates, Var c);
/// h' = o * tanh(c')
Var lstm_hidden(Var gates, Var c_next);
LstmState lstm_step(Var x, const LstmState& state, const LstmParams& params);
/// Runs one layer over x[B x T x D] from a zero state, returning [B x T x H].
Var lstm_sequence(Var x, const LstmParams& params);

// Bayes by Backprop ------------------------------------------------------------------
/// w = mu + softplus(rho) * eps
Var reparameterize(Var mu, Var rho, const Tensor& eps);
/// sum log N(w; mu, softplus(rho)^2)
Var gaussian_log_density(Var w, Var mu, Var rho);
/// sum log N(w; prior.mu, prior.sigma^2)
Var prior_log_density(Var w, const GaussianParams& prior);

// Pass statistics and losses ------------------------------------------------------
/// Elementwise mean over n same-shaped passes.
Var pass_mean(std::span<const Var> passes);
/// Elementwise unbiased std over n >= 2 passes: sqrt(var + eps).
Var pass_std(std::span<const Var> passes, double eps);

/// Mean over rows of CCC(truth row, estimate row); truth and estimate are
/// [B x T] (or [T]).
Var ccc_rows(const Tensor& truth, Var estimate);
/// Mean over frames of KL(label_t || N(m_hat, s_hat^2)) for the given family.
Var kl_label_mean(LabelFamily family, double nu, const Tensor& m, const Tensor& s, Var m_hat,
                  Var s_hat);
/// Mean over elements of 1/2 (m - y)^2 + 1/2 ln 2 pi (unit-variance Gaussian NLL).
Var gaussian_nll_mean(const Tensor& m, Var y);

}  // namespace labeldist::ad
