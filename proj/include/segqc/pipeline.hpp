#pragma once

// Cohort-level orchestration used by the CLI subcommands. The CLI adds no
// computation of its own, so tests can call these functions directly and
// expect byte-identical artifacts.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "segqc/gate.hpp"
#include "segqc/metrics.hpp"
#include "segqc/preprocess.hpp"
#include "segqc/qc_maps.hpp"
#include "segqc/regressor.hpp"
#include "segqc/synth.hpp"
#include "segqc/version.hpp"
#include "segqc/volume_io.hpp"

namespace segqc::pipeline {

inline void require_writable(const std::filesystem::path& path, bool force) {
    if (!force && std::filesystem::exists(path))
        throw data_error("output already exists (use --force to overwrite): " + path.string());
}

/// Every artifact-producing run records its configuration, seed and tool
/// version so it can be reproduced exactly.
inline void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                               const nlohmann::json& config) {
    nlohmann::json j;
    j["format"] = "segqc-run-manifest";
    j["schema_version"] = 1;
    j["tool_version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

struct LoadedCase {
    ScalarVolume image;
    BinaryMask gt;
    SampleStack stack;
    ScalarVolume reconstruction;
};

inline LoadedCase load_case(const CohortManifest& manifest, const CohortCaseEntry& entry) {
    LoadedCase c;
    c.image = load_volume(manifest.resolve(entry.image_path));
    c.gt = load_mask(manifest.resolve(entry.gt_path));
    c.reconstruction = load_volume(manifest.resolve(entry.recon_path));
    for (const auto& sp : entry.sample_paths) {
        ProbabilityMap p = load_volume(manifest.resolve(sp));
        require_probability(p, "sample map");
        c.stack.samples.push_back(std::move(p));
    }
    return c;
}

/// The auxiliary half of a feature pair: the image itself, the entropy map
/// of the averaged prediction, or the reconstruction error map.
inline ScalarVolume auxiliary_map(PairKind kind, const ScalarVolume& image,
                                  const ProbabilityMap& avg, const ScalarVolume& recon) {
    switch (kind) {
        case PairKind::image: return image;
        case PairKind::uncertainty: return entropy_map(avg);
        case PairKind::error: return error_map(image, recon);
    }
    throw std::invalid_argument("unknown pair kind");
}

struct ScoreOptions {
    bool absolute_error_vs = false;
    double binarize_threshold = 0.5;
};

/// Per-case QC scores: true Dice of the binarized MC average against the
/// ground truth, plus uncertainty and error voxel-wise sums.
inline std::vector<CaseRecord> score_cohort(const CohortManifest& manifest,
                                            const ScoreOptions& opts = {}) {
    std::vector<CaseRecord> cases;
    for (const auto& entry : manifest.cases) {
        const LoadedCase lc = load_case(manifest, entry);
        const ProbabilityMap avg = mc_average(lc.stack);
        const BinaryMask pred = binarize(avg, opts.binarize_threshold);

        CaseRecord rec;
        rec.id = entry.id;
        rec.true_dice = dice_coefficient(pred, lc.gt);
        rec.uncertainty_vs = voxelwise_sum(entropy_map(avg));
        ErrorMap em = error_map(lc.image, lc.reconstruction);
        rec.error_vs = voxelwise_sum(opts.absolute_error_vs ? absolute_map(em) : em);
        cases.push_back(std::move(rec));
    }
    std::sort(cases.begin(), cases.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.id < b.id; });
    return cases;
}

/// Seeded-random fold assignment over sorted case ids: deterministic
/// Fisher-Yates shuffle, then round-robin fold indices.
inline std::map<std::string, int> assign_folds(std::vector<std::string> ids, std::size_t folds,
                                               std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("fold count must be at least 2");
    if (ids.size() < folds)
        throw std::invalid_argument("cannot split " + std::to_string(ids.size()) +
                                    " cases into " + std::to_string(folds) + " folds");
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(ids[i], ids[j]);
    }
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < ids.size(); ++i)
        fold_of[ids[i]] = static_cast<int>(i % folds);
    return fold_of;
}

struct FoldSummary {
    int fold = 0;
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    std::optional<double> val_mae;
    std::optional<double> test_mae;
    std::vector<double> epoch_loss;
};

struct TrainOutcome {
    PairKind pair_kind = PairKind::uncertainty;
    std::size_t folds = 0;
    std::map<std::string, int> fold_of;
    std::vector<RegressorModel> models;      // one per fold
    std::vector<FoldSummary> summaries;      // one per fold
    std::vector<CaseRecord> predictions;     // out-of-fold predicted Dice filled in
};

/// K-fold cross-validated training. Within each fold, the held-out fold is
/// the test set and the remainder splits into train/validation with sizes
/// proportional to 68:16. Out-of-fold predictions fill predicted_dice.
inline TrainOutcome train_cohort(const CohortManifest& manifest,
                                 const std::vector<CaseRecord>& cases, PairKind kind,
                                 std::size_t folds, const TrainConfig& cfg) {
    std::map<std::string, const CohortCaseEntry*> entry_of;
    for (const auto& e : manifest.cases) entry_of[e.id] = &e;

    std::map<std::string, const CaseRecord*> case_of;
    std::vector<std::string> ids;
    for (const auto& c : cases) {
        if (!entry_of.count(c.id))
            throw data_error("case '" + c.id + "' not present in cohort manifest");
        if (!c.true_dice)
            throw data_error("case '" + c.id + "' has no true Dice; training needs targets");
        case_of[c.id] = &c;
        ids.push_back(c.id);
    }
    if (ids.empty()) throw std::invalid_argument("train_cohort: no cases");

    std::map<std::string, std::vector<double>> features_of;
    for (const std::string& id : ids) {
        const LoadedCase lc = load_case(manifest, *entry_of[id]);
        const ProbabilityMap avg = mc_average(lc.stack);
        const ScalarVolume aux = auxiliary_map(kind, lc.image, avg, lc.reconstruction);
        features_of[id] = extract_features(aux, avg);
    }

    TrainOutcome out;
    out.pair_kind = kind;
    out.folds = folds;
    out.fold_of = assign_folds(ids, folds, cfg.seed);

    std::map<std::string, double> oof_prediction;
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<std::string> test_ids, rest_ids;
        for (const std::string& id : ids)
            (out.fold_of[id] == static_cast<int>(k) ? test_ids : rest_ids).push_back(id);
        std::sort(rest_ids.begin(), rest_ids.end());
        std::sort(test_ids.begin(), test_ids.end());

        // Deterministic train/validation split of the remainder, 68:16.
        std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (k + 1)));
        for (std::size_t i = rest_ids.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
            std::swap(rest_ids[i], rest_ids[j]);
        }
        const auto n_train = static_cast<std::size_t>(
            std::llround(static_cast<double>(rest_ids.size()) * 68.0 / 84.0));
        std::vector<std::string> train_ids(rest_ids.begin(),
                                           rest_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::vector<std::string> val_ids(rest_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                                         rest_ids.end());

        std::vector<std::vector<double>> X;
        std::vector<double> y;
        for (const std::string& id : train_ids) {
            X.push_back(features_of[id]);
            y.push_back(*case_of[id]->true_dice);
        }
        TrainResult tr = train_regressor(X, y, cfg, kind);

        FoldSummary fs;
        fs.fold = static_cast<int>(k);
        fs.n_train = train_ids.size();
        fs.n_val = val_ids.size();
        fs.n_test = test_ids.size();
        fs.epoch_loss = tr.epoch_loss;
        auto subset_mae = [&](const std::vector<std::string>& subset) -> std::optional<double> {
            if (subset.empty()) return std::nullopt;
            std::vector<double> pred, truth;
            for (const std::string& id : subset) {
                pred.push_back(predict(tr.model, features_of[id]));
                truth.push_back(*case_of[id]->true_dice);
            }
            return mae(pred, truth);
        };
        fs.val_mae = subset_mae(val_ids);
        fs.test_mae = subset_mae(test_ids);
        for (const std::string& id : test_ids)
            oof_prediction[id] = predict(tr.model, features_of[id]);

        out.models.push_back(std::move(tr.model));
        out.summaries.push_back(std::move(fs));
    }

    for (const auto& c : cases) {
        CaseRecord rec = c;
        rec.fold = out.fold_of[c.id];
        rec.predicted_dice = oof_prediction.at(c.id);
        out.predictions.push_back(std::move(rec));
    }
    std::sort(out.predictions.begin(), out.predictions.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.id < b.id; });
    return out;
}

inline nlohmann::json train_summary_json(const TrainOutcome& out, const TrainConfig& cfg) {
    nlohmann::json j;
    j["format"] = "segqc-train-summary";
    j["schema_version"] = 1;
    j["pair_kind"] = pair_kind_name(out.pair_kind);
    j["folds"] = out.folds;
    j["seed"] = cfg.seed;
    j["config"] = {{"learning_rate", cfg.learning_rate},
                   {"beta1", cfg.beta1},
                   {"beta2", cfg.beta2},
                   {"epsilon", cfg.epsilon},
                   {"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"hidden_width", cfg.hidden_width},
                   {"huber_delta", cfg.huber_delta}};
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& fs : out.summaries) {
        nlohmann::json f;
        f["fold"] = fs.fold;
        f["n_train"] = fs.n_train;
        f["n_val"] = fs.n_val;
        f["n_test"] = fs.n_test;
        f["val_mae"] = fs.val_mae ? nlohmann::json(*fs.val_mae) : nlohmann::json(nullptr);
        f["test_mae"] = fs.test_mae ? nlohmann::json(*fs.test_mae) : nlohmann::json(nullptr);
        f["epoch_loss"] = fs.epoch_loss;
        folds.push_back(f);
    }
    j["per_fold"] = folds;
    return j;
}

inline void write_folds_csv(const std::map<std::string, int>& fold_of,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out << "id,fold\n";
    for (const auto& [id, fold] : fold_of) out << id << ',' << fold << "\n";
}

/// Fill predicted_dice for every case using one model.
inline std::vector<CaseRecord> predict_cases(const RegressorModel& model,
                                             const CohortManifest& manifest,
                                             const std::vector<CaseRecord>& cases) {
    std::map<std::string, const CohortCaseEntry*> entry_of;
    for (const auto& e : manifest.cases) entry_of[e.id] = &e;
    std::vector<CaseRecord> out;
    for (const auto& c : cases) {
        if (!entry_of.count(c.id))
            throw data_error("case '" + c.id + "' not present in cohort manifest");
        const LoadedCase lc = load_case(manifest, *entry_of[c.id]);
        const ProbabilityMap avg = mc_average(lc.stack);
        const ScalarVolume aux = auxiliary_map(model.pair_kind, lc.image, avg, lc.reconstruction);
        CaseRecord rec = c;
        rec.predicted_dice = predict(model, extract_features(aux, avg));
        out.push_back(std::move(rec));
    }
    std::sort(out.begin(), out.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.id < b.id; });
    return out;
}

struct MapsResult {
    ProbabilityMap mean_map;
    UncertaintyMap uncertainty_map;
    double uncertainty_vs = 0.0;
};

inline MapsResult compute_maps(const std::vector<std::filesystem::path>& sample_paths) {
    SampleStack stack;
    for (const auto& p : sample_paths) {
        ProbabilityMap m = load_volume(p);
        require_probability(m, "sample map");
        stack.samples.push_back(std::move(m));
    }
    MapsResult r;
    r.mean_map = mc_average(stack);
    r.uncertainty_map = entropy_map(r.mean_map);
    r.uncertainty_vs = voxelwise_sum(r.uncertainty_map);
    return r;
}

struct ErrmapResult {
    ErrorMap map;
    double error_vs = 0.0;
    bool absolute = false;
};

inline ErrmapResult compute_errmap(const std::filesystem::path& original_path,
                                   const std::filesystem::path& recon_path, bool absolute) {
    const ScalarVolume original = load_volume(original_path);
    const ScalarVolume recon = load_volume(recon_path);
    ErrmapResult r;
    r.absolute = absolute;
    ErrorMap em = error_map(original, recon);
    r.map = absolute ? absolute_map(em) : std::move(em);
    r.error_vs = voxelwise_sum(r.map);
    return r;
}

}  // namespace segqc::pipeline
