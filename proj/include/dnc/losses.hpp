#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dnc/errors.hpp"
#include "dnc/linalg.hpp"

namespace dnc {

/// Loss value plus gradients with respect to the head parameters and the
/// batch inputs. grad_bias is empty for the angular-margin head.
template <typename T>
struct LossGrad {
    T loss{};
    Matrix<T> grad_weights;
    std::vector<T> grad_bias;
    Matrix<T> grad_x;
};

namespace detail {

/// Softmax cross-entropy against `label` over `logits`. Overwrites logits
/// with dL/dlogit and returns the loss.
template <typename T>
T softmax_xent_inplace(std::span<T> logits, std::size_t label) {
    const T top = *std::max_element(logits.begin(), logits.end());
    T sum{};
    for (T l : logits) sum += std::exp(l - top);
    const T lse = top + std::log(sum);
    const T loss = lse - logits[label];
    for (T& l : logits) l = std::exp(l - lse);
    logits[label] -= T{1};
    return loss;
}

template <typename T>
void check_unit(std::span<const T> x, std::size_t i) {
    T sq{};
    for (T v : x) sq += v * v;
    if (std::abs(std::sqrt(sq) - T{1}) > T(1e-4)) {
        throw InvalidInput("loss input " + std::to_string(i) + " is not unit-norm");
    }
}

}  // namespace detail

/// Per-sample ArcFace term. `x` is the unit-norm embedding, `weights` the
/// S x d prototype matrix. On return `dcos[j]` holds dL/dcos(theta_j).
///
/// The target logit is s * cos(theta_y + m) evaluated as
/// c cos m - sqrt(1 - c^2) sin m with c clamped to [-1 + 1e-7, 1 - 1e-7].
/// When cos(theta_y) <= cos(pi - m) the target uses cos(theta_y) - m sin m
/// instead, which keeps the logit monotone in theta_y. With m = 0 the target
/// is exactly s * cos(theta_y).
template <typename T>
T arcface_sample(std::span<const T> x, std::size_t label, const Matrix<T>& weights, T scale, T margin,
                 std::span<T> dcos) {
    const std::size_t classes = weights.rows();
    const std::size_t d = weights.cols();
    for (std::size_t j = 0; j < classes; ++j) dcos[j] = dot(weights.row(j).data(), x.data(), d);

    const T cos_y = dcos[label];
    T target = cos_y;
    T dtarget = T{1};
    if (margin != T{0}) {
        const T cos_m = std::cos(margin);
        const T sin_m = std::sin(margin);
        if (cos_y <= std::cos(std::numbers::pi_v<T> - margin)) {
            target = cos_y - margin * sin_m;
        } else {
            constexpr T kEps = T(1e-7);
            const bool clamped = cos_y < T{-1} + kEps || cos_y > T{1} - kEps;
            const T c = std::clamp(cos_y, T{-1} + kEps, T{1} - kEps);
            const T sin_y = std::sqrt(T{1} - c * c);
            target = c * cos_m - sin_y * sin_m;
            dtarget = clamped ? T{0} : cos_m + c * sin_m / sin_y;
        }
    }

    for (std::size_t j = 0; j < classes; ++j) dcos[j] *= scale;
    dcos[label] = scale * target;
    const T loss = detail::softmax_xent_inplace(dcos, label);
    for (std::size_t j = 0; j < classes; ++j) dcos[j] *= scale;
    dcos[label] *= dtarget;
    return loss;
}

/// Per-sample softmax cross-entropy on W x + b. On return `dlogit` holds
/// dL/dlogit.
template <typename T>
T ce_sample(std::span<const T> x, std::size_t label, const Matrix<T>& weights, std::span<const T> bias,
            std::span<T> dlogit) {
    const std::size_t d = weights.cols();
    for (std::size_t j = 0; j < weights.rows(); ++j) {
        dlogit[j] = dot(weights.row(j).data(), x.data(), d) + bias[j];
    }
    return detail::softmax_xent_inplace(dlogit, label);
}

namespace detail {

template <typename T, typename SampleFn>
LossGrad<T> batch_loss(const Matrix<T>& x_batch, std::span<const std::size_t> labels,
                       const Matrix<T>& weights, bool with_bias, SampleFn&& sample) {
    if (x_batch.rows() != labels.size()) throw InvalidInput("loss: batch/label count mismatch");
    if (x_batch.rows() == 0) throw InvalidInput("loss: empty batch");
    if (x_batch.cols() != weights.cols()) throw InvalidInput("loss: embedding dim mismatch");
    const std::size_t classes = weights.rows();
    const std::size_t d = weights.cols();
    const T inv_b = T{1} / static_cast<T>(labels.size());

    LossGrad<T> out;
    out.grad_weights = Matrix<T>(classes, d);
    out.grad_x = Matrix<T>(x_batch.rows(), d);
    if (with_bias) out.grad_bias.assign(classes, T{});

    std::vector<T> dlogit(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw InvalidInput("loss: label " + std::to_string(labels[i]) + " out of range");
        }
        check_unit<T>(x_batch.row(i), i);
        out.loss += sample(x_batch.row(i), labels[i], std::span<T>(dlogit)) * inv_b;
        auto gx = out.grad_x.row(i);
        for (std::size_t j = 0; j < classes; ++j) {
            const T g = dlogit[j] * inv_b;
            auto gw = out.grad_weights.row(j);
            auto w = weights.row(j);
            auto xi = x_batch.row(i);
            for (std::size_t k = 0; k < d; ++k) {
                gw[k] += g * xi[k];
                gx[k] += g * w[k];
            }
            if (with_bias) out.grad_bias[j] += g;
        }
    }
    return out;
}

}  // namespace detail

/// Mean ArcFace loss over a batch of unit-norm embeddings (rows of x_batch).
template <typename T>
LossGrad<T> arcface_loss(const Matrix<T>& x_batch, std::span<const std::size_t> labels,
                         const Matrix<T>& weights, T scale, T margin) {
    return detail::batch_loss<T>(x_batch, labels, weights, false,
                                 [&](std::span<const T> x, std::size_t y, std::span<T> dl) {
                                     return arcface_sample<T>(x, y, weights, scale, margin, dl);
                                 });
}

/// Mean softmax cross-entropy of a linear head over a batch.
template <typename T>
LossGrad<T> ce_loss(const Matrix<T>& x_batch, std::span<const std::size_t> labels,
                    const Matrix<T>& weights, std::span<const T> bias) {
    if (bias.size() != weights.rows()) throw InvalidInput("ce_loss: bias size mismatch");
    return detail::batch_loss<T>(x_batch, labels, weights, true,
                                 [&](std::span<const T> x, std::size_t y, std::span<T> dl) {
                                     return ce_sample<T>(x, y, weights, bias, dl);
                                 });
}

}  // namespace dnc
