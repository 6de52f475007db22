#include "dnc/train.hpp"

#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "dnc/errors.hpp"
#include "dnc/losses.hpp"

namespace dnc {

namespace {

/// Adam moments for one parameter block.
class AdamState {
public:
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        const double lr = cfg.learning_rate;
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
            v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }

private:
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

struct HeadParams {
    Matrix<double> weights;
    std::vector<double> bias;
    AdamState weight_state;
    AdamState bias_state;
    std::vector<std::size_t> images;                    // dataset rows
    std::vector<std::vector<std::size_t>> class_images;  // per row of the head
    bool updated = false;
};

void renormalize_rows(Matrix<double>& w) {
    for (std::size_t r = 0; r < w.rows(); ++r) normalize_inplace<double>(w.row(r));
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0 || iterations_per_epoch == 0) {
        throw InvalidInput("batch size and iterations per epoch must be positive");
    }
    if (!(learning_rate > 0)) throw InvalidInput("learning rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) {
        throw InvalidInput("Adam decay rates must be in [0, 1) and epsilon positive");
    }
    if (!(scale > 0)) throw InvalidInput("scale s must be positive");
    if (!(margin >= 0 && margin < std::acos(0.0))) throw InvalidInput("margin m must be in [0, pi/2)");
}

DncModel train(const GeoDataset& dataset, const ClassPartition& partition, const TrainConfig& config,
               HeadKind kind, std::vector<EpochStats>* history) {
    config.validate();
    if (partition.class_of_image().size() != dataset.size()) {
        throw InvalidInput("train: partition was not built from this dataset");
    }
    const std::size_t d_in = dataset.dim;
    const std::size_t d = config.embed_dim == 0 ? d_in : config.embed_dim;

    DncModel model = init_model(partition, kind, d_in, d, config.scale, config.margin, config.seed);
    const int groups = partition.num_groups();

    Matrix<double> projection = model.projection.cast<double>();
    AdamState projection_state(projection.size());
    std::vector<HeadParams> heads;
    heads.reserve(groups);
    for (int k = 0; k < groups; ++k) {
        const auto& h = model.heads[k];
        HeadParams hp{h.weights.cast<double>(), std::vector<double>(h.bias.begin(), h.bias.end()),
                      AdamState(h.weights.size()), AdamState(h.bias.size()), partition.group_images(k),
                      std::vector<std::vector<std::size_t>>(h.weights.rows())};
        for (std::size_t img : hp.images) {
            const auto cls = static_cast<std::size_t>(partition.class_of_image()[img]);
            hp.class_images[partition.row_in_group(cls)].push_back(img);
        }
        heads.push_back(std::move(hp));
    }

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t batch = config.batch_size;
    const double inv_b = 1.0 / static_cast<double>(batch);

    Matrix<double> grad_projection(d, d_in);
    std::vector<double> raw(d_in), z(d), x(d), gx(d), gz(d);
    std::vector<double> dlogit;
    std::vector<std::size_t> picks(batch);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const int k = static_cast<int>(epoch % static_cast<std::size_t>(groups));
        HeadParams& head = heads[k];
        EpochStats stats{epoch, k, false, 0.0};
        if (head.images.empty()) {
            spdlog::warn("epoch {}: group {} has no training images, skipping", epoch, k);
            stats.skipped = true;
            if (history) history->push_back(stats);
            continue;
        }
        const std::size_t classes = head.weights.rows();
        dlogit.resize(classes);
        Matrix<double> grad_weights(classes, d);
        std::vector<double> grad_bias(head.bias.size());
        std::uniform_int_distribution<std::size_t> pick_image(0, head.images.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_class(0, classes - 1);
        double epoch_loss = 0.0;

        for (std::size_t it = 0; it < config.iterations_per_epoch; ++it) {
            for (std::size_t b = 0; b < batch; ++b) {
                if (config.sampling == Sampling::uniform) {
                    picks[b] = head.images[pick_image(rng)];
                } else {
                    const auto& pool = head.class_images[pick_class(rng)];
                    picks[b] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
                }
            }
            std::fill(grad_projection.flat().begin(), grad_projection.flat().end(), 0.0);
            std::fill(grad_weights.flat().begin(), grad_weights.flat().end(), 0.0);
            std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t img = picks[b];
                const auto cls = static_cast<std::size_t>(partition.class_of_image()[img]);
                const std::size_t label = partition.row_in_group(cls);
                const auto desc = dataset.descriptor(img);
                for (std::size_t i = 0; i < d_in; ++i) raw[i] = desc[i];

                double sq = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    z[r] = dot(projection.row(r).data(), raw.data(), d_in);
                    sq += z[r] * z[r];
                }
                const double norm = std::sqrt(sq);
                const bool degenerate = norm < 1e-12;
                if (degenerate) {
                    std::fill(x.begin(), x.end(), 0.0);
                    x[0] = 1.0;
                } else {
                    for (std::size_t r = 0; r < d; ++r) x[r] = z[r] / norm;
                }

                batch_loss += kind == HeadKind::aamc
                                  ? arcface_sample<double>(x, label, head.weights, config.scale,
                                                           config.margin, dlogit)
                                  : ce_sample<double>(x, label, head.weights, head.bias, dlogit);

                std::fill(gx.begin(), gx.end(), 0.0);
                for (std::size_t j = 0; j < classes; ++j) {
                    const double g = dlogit[j] * inv_b;
                    double* gw = grad_weights.row(j).data();
                    const double* w = head.weights.row(j).data();
                    for (std::size_t c = 0; c < d; ++c) {
                        gw[c] += g * x[c];
                        gx[c] += g * w[c];
                    }
                    if (!grad_bias.empty()) grad_bias[j] += g;
                }
                if (degenerate) continue;

                // Back through x = z / ||z||.
                double radial = 0.0;
                for (std::size_t c = 0; c < d; ++c) radial += gx[c] * x[c];
                for (std::size_t c = 0; c < d; ++c) gz[c] = (gx[c] - radial * x[c]) / norm;
                for (std::size_t r = 0; r < d; ++r) {
                    double* gp = grad_projection.row(r).data();
                    const double g = gz[r];
                    for (std::size_t i = 0; i < d_in; ++i) gp[i] += g * raw[i];
                }
            }

            head.updated = true;
            head.weight_state.step(head.weights.flat(), grad_weights.flat(), config);
            if (!head.bias.empty()) head.bias_state.step(head.bias, grad_bias, config);
            if (kind == HeadKind::aamc) renormalize_rows(head.weights);
            projection_state.step(projection.flat(), grad_projection.flat(), config);
            epoch_loss += batch_loss * inv_b;
        }
        stats.mean_loss = epoch_loss / static_cast<double>(config.iterations_per_epoch);
        spdlog::debug("epoch {} group {} loss {:.5f}", epoch, k, stats.mean_loss);
        if (history) history->push_back(stats);
    }

    model.projection = projection.cast<float>();
    for (int k = 0; k < groups; ++k) {
        if (!heads[k].updated) continue;
        model.heads[k].weights = heads[k].weights.cast<float>();
        if (kind == HeadKind::aamc) {
            // Rounding to f32 can leave a row a few ulps off unit length.
            for (std::size_t r = 0; r < model.heads[k].weights.rows(); ++r) {
                normalize_inplace<float>(model.heads[k].weights.row(r));
            }
        }
        model.heads[k].bias.assign(heads[k].bias.begin(), heads[k].bias.end());
    }
    return model;
}

}  // namespace dnc
