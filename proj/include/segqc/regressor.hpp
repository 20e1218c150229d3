#pragma once

// Ground-truth-free Dice prediction: fixed-order features extracted from an
// (auxiliary map, prediction map) pair feed a one-hidden-layer tanh
// regressor trained with Huber loss under Adam. Training is single-threaded
// and bit-deterministic for a fixed seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "segqc/preprocess.hpp"
#include "segqc/qc_maps.hpp"
#include "segqc/volume.hpp"

namespace segqc {

enum class PairKind { image, uncertainty, error };

inline const char* pair_kind_name(PairKind k) {
    switch (k) {
        case PairKind::image: return "image";
        case PairKind::uncertainty: return "uncertainty";
        case PairKind::error: return "error";
    }
    throw std::invalid_argument("unknown pair kind");
}

inline PairKind pair_kind_from_name(const std::string& s) {
    if (s == "image") return PairKind::image;
    if (s == "uncertainty") return PairKind::uncertainty;
    if (s == "error") return PairKind::error;
    throw std::invalid_argument("unknown pair kind '" + s + "'");
}

inline constexpr std::size_t kFeatureCount = 18;

inline std::vector<std::string> feature_names() {
    std::vector<std::string> names = {"aux_mean",    "aux_std",     "aux_min",
                                      "aux_max",     "aux_vs",      "pred_vs",
                                      "lesion_count", "inside_mean", "outside_mean"};
    for (int b = 0; b < 8; ++b) names.push_back("aux_hist_" + std::to_string(b));
    names.push_back("boundary_count");
    return names;
}

/// Fixed-order feature vector from an auxiliary map and a prediction map.
/// The vector length is identical for every pair kind.
inline std::vector<double> extract_features(const ScalarVolume& aux,
                                            const ProbabilityMap& pred) {
    require_shape_match(aux.shape, pred.shape, "extract_features");
    const std::size_t n = aux.voxels.size();
    const double nd = static_cast<double>(n);

    double sum = 0.0, mn = aux.voxels[0], mx = aux.voxels[0];
    for (double v : aux.voxels) {
        sum += v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const double mean = sum / nd;
    double var = 0.0;
    for (double v : aux.voxels) var += (v - mean) * (v - mean);
    const double stdev = std::sqrt(var / nd);

    const BinaryMask lesion = binarize(pred, 0.5);
    std::size_t lesion_count = 0;
    double inside_sum = 0.0, outside_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (lesion.voxels[i]) {
            ++lesion_count;
            inside_sum += aux.voxels[i];
        } else {
            outside_sum += aux.voxels[i];
        }
    }
    const double inside_mean =
        lesion_count > 0 ? inside_sum / static_cast<double>(lesion_count) : 0.0;
    const double outside_mean =
        lesion_count < n ? outside_sum / static_cast<double>(n - lesion_count) : 0.0;

    // 8-bin histogram of aux over its own range, as voxel fractions.
    std::array<double, 8> hist{};
    if (mx > mn) {
        const double scale = 8.0 / (mx - mn);
        for (double v : aux.voxels) {
            auto b = static_cast<std::size_t>((v - mn) * scale);
            hist[std::min<std::size_t>(b, 7)] += 1.0;
        }
    } else {
        hist[0] = nd;
    }
    for (double& h : hist) h /= nd;

    // Lesion voxels with at least one background 6-neighbour; the grid edge
    // counts as background.
    const GridShape& s = lesion.shape;
    std::size_t boundary = 0;
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y)
            for (std::size_t x = 0; x < s.nx; ++x) {
                if (!lesion.at(x, y, z)) continue;
                const bool edge =
                    x == 0 || x + 1 == s.nx || y == 0 || y + 1 == s.ny || z == 0 ||
                    z + 1 == s.nz || !lesion.at(x - 1, y, z) || !lesion.at(x + 1, y, z) ||
                    !lesion.at(x, y - 1, z) || !lesion.at(x, y + 1, z) ||
                    !lesion.at(x, y, z - 1) || !lesion.at(x, y, z + 1);
                if (edge) ++boundary;
            }

    std::vector<double> f;
    f.reserve(kFeatureCount);
    f.push_back(mean);
    f.push_back(stdev);
    f.push_back(mn);
    f.push_back(mx);
    f.push_back(voxelwise_sum(aux));
    f.push_back(voxelwise_sum(pred));
    f.push_back(static_cast<double>(lesion_count));
    f.push_back(inside_mean);
    f.push_back(outside_mean);
    for (double h : hist) f.push_back(h);
    f.push_back(static_cast<double>(boundary));
    return f;
}

/// Huber loss in its literal two-branch form: (y-yhat)^2/2 inside the delta
/// band, delta*|y-yhat| - delta/2 outside. The two branches agree at the
/// breakpoint only for delta = 1, the default used throughout.
inline double huber_loss(double y_true, double y_pred, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("huber_loss: delta must be positive");
    const double r = y_true - y_pred;
    const double a = std::fabs(r);
    if (a <= delta) return 0.5 * r * r;
    return delta * a - 0.5 * delta;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    std::size_t hidden_width = 16;
    double huber_delta = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("Adam betas must lie in [0,1)");
        if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
        if (!(huber_delta > 0.0)) throw std::invalid_argument("huber delta must be > 0");
        if (epochs == 0 || batch_size == 0 || hidden_width == 0)
            throw std::invalid_argument("epochs, batch size and hidden width must be >= 1");
    }
};

struct RegressorModel {
    PairKind pair_kind = PairKind::uncertainty;
    std::vector<double> feature_mean;        // one entry per raw feature
    std::vector<double> feature_std;         // one entry per raw feature
    std::vector<std::size_t> kept_features;  // raw indices with nonzero variance
    std::size_t hidden_width = 0;
    std::vector<double> w1;  // hidden_width x kept_features.size(), row-major
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    std::vector<double> standardize(const std::vector<double>& raw) const {
        if (raw.size() != feature_mean.size())
            throw std::invalid_argument("feature length " + std::to_string(raw.size()) +
                                        " does not match model (" +
                                        std::to_string(feature_mean.size()) + ")");
        std::vector<double> x(kept_features.size());
        for (std::size_t k = 0; k < kept_features.size(); ++k) {
            const std::size_t j = kept_features[k];
            x[k] = (raw[j] - feature_mean[j]) / feature_std[j];
        }
        return x;
    }
};

namespace detail {

struct MlpShape {
    std::size_t inputs = 0;
    std::size_t hidden = 0;
    std::size_t param_count() const { return hidden * inputs + hidden + hidden + 1; }
    // parameter layout: w1 row-major, then b1, then w2, then b2
    std::size_t b1_off() const { return hidden * inputs; }
    std::size_t w2_off() const { return b1_off() + hidden; }
    std::size_t b2_off() const { return w2_off() + hidden; }
};

inline double mlp_forward(const MlpShape& shape, const double* p, const double* x) {
    double out = p[shape.b2_off()];
    for (std::size_t h = 0; h < shape.hidden; ++h) {
        double a = p[shape.b1_off() + h];
        const double* w = p + h * shape.inputs;
        for (std::size_t d = 0; d < shape.inputs; ++d) a += w[d] * x[d];
        out += p[shape.w2_off() + h] * std::tanh(a);
    }
    return out;
}

/// Mean Huber loss over a dataset; accumulates the analytic gradient into
/// grad when non-null (grad must be zero-initialised, param_count long).
inline double mlp_loss_and_grad(const MlpShape& shape, const std::vector<double>& params,
                                const std::vector<std::vector<double>>& xs,
                                const std::vector<double>& ys, double delta,
                                std::vector<double>* grad) {
    const double m = static_cast<double>(xs.size());
    const double* p = params.data();
    double total = 0.0;
    std::vector<double> act(shape.hidden);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double* x = xs[i].data();
        double out = p[shape.b2_off()];
        for (std::size_t h = 0; h < shape.hidden; ++h) {
            double a = p[shape.b1_off() + h];
            const double* w = p + h * shape.inputs;
            for (std::size_t d = 0; d < shape.inputs; ++d) a += w[d] * x[d];
            act[h] = std::tanh(a);
            out += p[shape.w2_off() + h] * act[h];
        }
        const double r = ys[i] - out;
        const double a_r = std::fabs(r);
        total += a_r <= delta ? 0.5 * r * r : delta * a_r - 0.5 * delta;
        if (!grad) continue;

        // d(huber)/d(out), averaged over the dataset
        const double g_out = (a_r <= delta ? -r : delta * (out > ys[i] ? 1.0 : -1.0)) / m;
        double* g = grad->data();
        g[shape.b2_off()] += g_out;
        for (std::size_t h = 0; h < shape.hidden; ++h) {
            g[shape.w2_off() + h] += g_out * act[h];
            const double g_a = g_out * p[shape.w2_off() + h] * (1.0 - act[h] * act[h]);
            g[shape.b1_off() + h] += g_a;
            double* gw = g + h * shape.inputs;
            for (std::size_t d = 0; d < shape.inputs; ++d) gw[d] += g_a * x[d];
        }
    }
    return total / m;
}

// 53-bit uniform in [0,1); keeps draws identical across standard libraries.
inline double uniform01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Forward pass on raw features; output clamped to [0,1] since Dice is
/// bounded (training itself runs unclamped).
inline double predict(const RegressorModel& model, const std::vector<double>& features) {
    const std::vector<double> x = model.standardize(features);
    detail::MlpShape shape{model.kept_features.size(), model.hidden_width};
    std::vector<double> params;
    params.reserve(shape.param_count());
    params.insert(params.end(), model.w1.begin(), model.w1.end());
    params.insert(params.end(), model.b1.begin(), model.b1.end());
    params.insert(params.end(), model.w2.begin(), model.w2.end());
    params.push_back(model.b2);
    return std::clamp(detail::mlp_forward(shape, params.data(), x.data()), 0.0, 1.0);
}

struct TrainResult {
    RegressorModel model;
    std::vector<double> epoch_loss;  // full-dataset mean Huber loss per epoch
};

inline TrainResult train_regressor(const std::vector<std::vector<double>>& features,
                                   const std::vector<double>& targets, const TrainConfig& cfg,
                                   PairKind kind = PairKind::uncertainty) {
    cfg.validate();
    if (features.size() != targets.size())
        throw std::invalid_argument("train_regressor: feature/target count mismatch");
    if (features.size() < 2 * cfg.batch_size)
        throw std::invalid_argument("train_regressor: need at least 2*batch_size samples, have " +
                                    std::to_string(features.size()));
    const std::size_t n_raw = features[0].size();
    for (const auto& f : features)
        if (f.size() != n_raw)
            throw std::invalid_argument("train_regressor: ragged feature vectors");
    for (double t : targets)
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("train_regressor: target outside [0,1]");

    const double t_mean =
        std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    double t_var = 0.0;
    for (double t : targets) t_var += (t - t_mean) * (t - t_mean);
    if (t_var == 0.0)
        throw degenerate_error("train_regressor: all targets identical, nothing to regress");

    RegressorModel model;
    model.pair_kind = kind;
    model.feature_mean.assign(n_raw, 0.0);
    model.feature_std.assign(n_raw, 0.0);
    const double m = static_cast<double>(features.size());
    for (std::size_t j = 0; j < n_raw; ++j) {
        double s = 0.0;
        for (const auto& f : features) s += f[j];
        model.feature_mean[j] = s / m;
        double v = 0.0;
        for (const auto& f : features) {
            const double d = f[j] - model.feature_mean[j];
            v += d * d;
        }
        model.feature_std[j] = std::sqrt(v / m);
        if (model.feature_std[j] > 1e-12) model.kept_features.push_back(j);
    }
    if (model.kept_features.empty())
        throw degenerate_error("train_regressor: every feature has zero variance");
    model.hidden_width = cfg.hidden_width;

    std::vector<std::vector<double>> xs(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) xs[i] = model.standardize(features[i]);

    detail::MlpShape shape{model.kept_features.size(), cfg.hidden_width};
    std::vector<double> params(shape.param_count(), 0.0);

    std::mt19937_64 rng(cfg.seed);
    const double lim1 = std::sqrt(6.0 / static_cast<double>(shape.inputs + shape.hidden));
    for (std::size_t i = 0; i < shape.hidden * shape.inputs; ++i)
        params[i] = (2.0 * detail::uniform01(rng()) - 1.0) * lim1;
    const double lim2 = std::sqrt(6.0 / static_cast<double>(shape.hidden + 1));
    for (std::size_t h = 0; h < shape.hidden; ++h)
        params[shape.w2_off() + h] = (2.0 * detail::uniform01(rng()) - 1.0) * lim2;

    std::vector<double> adam_m(params.size(), 0.0), adam_v(params.size(), 0.0);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(params.size());
    std::vector<std::vector<double>> bx;
    std::vector<double> by;

    TrainResult result;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with raw 64-bit draws: std::shuffle is not
        // reproducible across standard libraries.
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            bx.clear();
            by.clear();
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(xs[order[i]]);
                by.push_back(targets[order[i]]);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            detail::mlp_loss_and_grad(shape, params, bx, by, cfg.huber_delta, &grad);
            ++step;
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                adam_m[i] = cfg.beta1 * adam_m[i] + (1.0 - cfg.beta1) * grad[i];
                adam_v[i] = cfg.beta2 * adam_v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                const double mhat = adam_m[i] / corr1;
                const double vhat = adam_v[i] / corr2;
                params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
            }
        }
        result.epoch_loss.push_back(
            detail::mlp_loss_and_grad(shape, params, xs, targets, cfg.huber_delta, nullptr));
    }

    model.w1.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(shape.b1_off()));
    model.b1.assign(params.begin() + static_cast<std::ptrdiff_t>(shape.b1_off()),
                    params.begin() + static_cast<std::ptrdiff_t>(shape.w2_off()));
    model.w2.assign(params.begin() + static_cast<std::ptrdiff_t>(shape.w2_off()),
                    params.begin() + static_cast<std::ptrdiff_t>(shape.b2_off()));
    model.b2 = params[shape.b2_off()];
    result.model = std::move(model);
    return result;
}

inline void save_model(const RegressorModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "segqc-regressor";
    j["schema_version"] = 1;
    j["pair_kind"] = pair_kind_name(model.pair_kind);
    j["feature_names"] = feature_names();
    j["feature_mean"] = model.feature_mean;
    j["feature_std"] = model.feature_std;
    j["kept_features"] = model.kept_features;
    j["hidden_width"] = model.hidden_width;
    j["w1"] = model.w1;
    j["b1"] = model.b1;
    j["w2"] = model.w2;
    j["b2"] = model.b2;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw data_error("model write failed: " + path.string());
}

inline RegressorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open model file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad model file " + path.string() + ": " + e.what());
    }
    if (!j.contains("format") || j["format"] != "segqc-regressor")
        throw data_error("not a segqc regressor model: " + path.string());
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw data_error("unsupported model schema version: " + path.string());
    RegressorModel m;
    m.pair_kind = pair_kind_from_name(j["pair_kind"].get<std::string>());
    m.feature_mean = j["feature_mean"].get<std::vector<double>>();
    m.feature_std = j["feature_std"].get<std::vector<double>>();
    m.kept_features = j["kept_features"].get<std::vector<std::size_t>>();
    m.hidden_width = j["hidden_width"].get<std::size_t>();
    m.w1 = j["w1"].get<std::vector<double>>();
    m.b1 = j["b1"].get<std::vector<double>>();
    m.w2 = j["w2"].get<std::vector<double>>();
    m.b2 = j["b2"].get<double>();
    const std::size_t d = m.kept_features.size();
    if (m.w1.size() != m.hidden_width * d || m.b1.size() != m.hidden_width ||
        m.w2.size() != m.hidden_width || m.feature_std.size() != m.feature_mean.size())
        throw data_error("inconsistent model weight shapes: " + path.string());
    return m;
}

}  // namespace segqc
