#pragma once

// Failure gating and protocol evaluation: threshold rules on a quality
// score partition a cohort into flagged/passed cases, and the evaluation
// report compares Dice statistics before and after removal alongside
// precision, recall, correlation and MAE.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segqc/csv.hpp"
#include "segqc/errors.hpp"
#include "segqc/metrics.hpp"

namespace segqc {

enum class ScoreKind { uncertainty_vs, error_vs, predicted_dice };
enum class FlagWhen { below, above };

inline const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::uncertainty_vs: return "uncertainty_vs";
        case ScoreKind::error_vs: return "error_vs";
        case ScoreKind::predicted_dice: return "predicted_dice";
    }
    throw std::invalid_argument("unknown score kind");
}

inline ScoreKind score_kind_from_name(const std::string& s) {
    if (s == "uncertainty_vs") return ScoreKind::uncertainty_vs;
    if (s == "error_vs") return ScoreKind::error_vs;
    if (s == "predicted_dice") return ScoreKind::predicted_dice;
    throw std::invalid_argument("unknown score kind '" + s + "'");
}

inline const char* flag_when_name(FlagWhen f) { return f == FlagWhen::below ? "below" : "above"; }

inline FlagWhen flag_when_from_name(const std::string& s) {
    if (s == "below") return FlagWhen::below;
    if (s == "above") return FlagWhen::above;
    throw std::invalid_argument("flag direction must be 'below' or 'above', got '" + s + "'");
}

inline const char* positive_class_name(PositiveClass p) {
    return p == PositiveClass::fail ? "fail" : "pass";
}

inline PositiveClass positive_class_from_name(const std::string& s) {
    if (s == "fail") return PositiveClass::fail;
    if (s == "pass") return PositiveClass::pass;
    throw std::invalid_argument("positive class must be 'fail' or 'pass', got '" + s + "'");
}

// One QC row per case.
struct CaseRecord {
    std::string id;
    std::optional<int> fold;
    std::optional<double> true_dice;
    std::optional<double> uncertainty_vs;
    std::optional<double> error_vs;
    std::optional<double> predicted_dice;

    bool operator==(const CaseRecord&) const = default;

    std::optional<double> score(ScoreKind kind) const {
        switch (kind) {
            case ScoreKind::uncertainty_vs: return uncertainty_vs;
            case ScoreKind::error_vs: return error_vs;
            case ScoreKind::predicted_dice: return predicted_dice;
        }
        return std::nullopt;
    }

    void validate() const {
        if (id.empty()) throw data_error("case record with empty id");
        if (!uncertainty_vs && !error_vs && !predicted_dice)
            throw data_error("case '" + id + "' carries no score field");
        for (const auto& [name, v] :
             {std::pair{"true_dice", true_dice}, std::pair{"predicted_dice", predicted_dice}})
            if (v && !(*v >= 0.0 && *v <= 1.0))
                throw data_error("case '" + id + "': " + name + " outside [0,1]");
    }
};

struct GateParams {
    ScoreKind score = ScoreKind::uncertainty_vs;
    double threshold = 0.0;
    FlagWhen flag_when = FlagWhen::below;
    PositiveClass positive = PositiveClass::fail;
};

struct GatePartition {
    std::vector<std::string> flagged;
    std::vector<std::string> passed;
};

/// Strict-threshold partition: a case is flagged iff its score is strictly
/// below (or above) the threshold. Ties always pass.
inline GatePartition apply_gate(const std::vector<CaseRecord>& cases, const GateParams& p) {
    GatePartition out;
    for (const CaseRecord& c : cases) {
        const auto s = c.score(p.score);
        if (!s)
            throw data_error("case '" + c.id + "' is missing the selected score " +
                             score_kind_name(p.score));
        const bool flagged = p.flag_when == FlagWhen::below ? *s < p.threshold : *s > p.threshold;
        (flagged ? out.flagged : out.passed).push_back(c.id);
    }
    return out;
}

struct GateStats {
    std::size_t n_total = 0;
    std::size_t n_flagged = 0;
    double mean_dice_before = 0.0;
    double median_dice_before = 0.0;
    std::optional<double> mean_dice_after;    // empty when every case is flagged
    std::optional<double> median_dice_after;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> pearson_r;
    std::optional<double> mae;  // predicted-Dice gates only

    bool operator==(const GateStats&) const = default;
};

// Cross-fold aggregate of GateStats fields; every entry is the mean (or
// median) of the folds where the field was defined.
struct GateStatsAggregate {
    std::optional<double> n_total, n_flagged;
    std::optional<double> mean_dice_before, median_dice_before;
    std::optional<double> mean_dice_after, median_dice_after;
    std::optional<double> precision, recall, pearson_r, mae;

    bool operator==(const GateStatsAggregate&) const = default;
};

struct GateReport {
    ScoreKind score = ScoreKind::uncertainty_vs;
    double threshold = 0.0;
    FlagWhen flag_when = FlagWhen::below;
    PositiveClass positive = PositiveClass::fail;
    double dice_fail_threshold = 0.75;
    std::vector<std::string> flagged_ids;  // cohort order
    GateStats overall;
    std::vector<std::pair<int, GateStats>> per_fold;  // sorted by fold index
    std::optional<GateStatsAggregate> fold_mean;
    std::optional<GateStatsAggregate> fold_median;

    bool operator==(const GateReport&) const = default;
};

namespace detail {

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline GateStats gate_stats(const std::vector<const CaseRecord*>& cases, const GateParams& p,
                            double dice_fail_threshold) {
    GateStats st;
    st.n_total = cases.size();
    std::vector<double> dice_all, dice_kept, scores, predicted;
    std::vector<bool> pred_fail, true_fail;
    for (const CaseRecord* c : cases) {
        const double d = *c->true_dice;
        const double s = *c->score(p.score);
        const bool flagged = p.flag_when == FlagWhen::below ? s < p.threshold : s > p.threshold;
        dice_all.push_back(d);
        if (!flagged) dice_kept.push_back(d);
        scores.push_back(s);
        pred_fail.push_back(flagged);
        true_fail.push_back(d < dice_fail_threshold);
        if (p.score == ScoreKind::predicted_dice) predicted.push_back(s);
        st.n_flagged += flagged;
    }
    st.mean_dice_before = mean_of(dice_all);
    st.median_dice_before = median_of(dice_all);
    if (!dice_kept.empty()) {
        st.mean_dice_after = mean_of(dice_kept);
        st.median_dice_after = median_of(dice_kept);
    }
    const PrecisionRecall pr = precision_recall(pred_fail, true_fail, p.positive);
    st.precision = pr.precision;
    st.recall = pr.recall;
    try {
        st.pearson_r = pearson_r(scores, dice_all);
    } catch (const degenerate_error&) {
        st.pearson_r = std::nullopt;
    }
    if (p.score == ScoreKind::predicted_dice) st.mae = mae(predicted, dice_all);
    return st;
}

inline GateStatsAggregate aggregate_folds(const std::vector<std::pair<int, GateStats>>& folds,
                                          bool use_median) {
    GateStatsAggregate agg;
    auto combine = [&](auto getter) -> std::optional<double> {
        std::vector<double> vals;
        for (const auto& [fold, st] : folds) {
            const std::optional<double> v = getter(st);
            if (v) vals.push_back(*v);
        }
        if (vals.empty()) return std::nullopt;
        return use_median ? median_of(vals) : mean_of(vals);
    };
    agg.n_total = combine([](const GateStats& s) -> std::optional<double> {
        return static_cast<double>(s.n_total);
    });
    agg.n_flagged = combine([](const GateStats& s) -> std::optional<double> {
        return static_cast<double>(s.n_flagged);
    });
    agg.mean_dice_before = combine([](const GateStats& s) -> std::optional<double> {
        return s.mean_dice_before;
    });
    agg.median_dice_before = combine([](const GateStats& s) -> std::optional<double> {
        return s.median_dice_before;
    });
    agg.mean_dice_after = combine([](const GateStats& s) { return s.mean_dice_after; });
    agg.median_dice_after = combine([](const GateStats& s) { return s.median_dice_after; });
    agg.precision = combine([](const GateStats& s) { return s.precision; });
    agg.recall = combine([](const GateStats& s) { return s.recall; });
    agg.pearson_r = combine([](const GateStats& s) { return s.pearson_r; });
    agg.mae = combine([](const GateStats& s) { return s.mae; });
    return agg;
}

}  // namespace detail

/// Evaluate the gate against ground truth: true-failure labels come from
/// true Dice < dice_fail_threshold (strict), predicted-failure labels from
/// the gate partition. Degenerate statistics surface as empty fields.
inline GateReport evaluate_gate(const std::vector<CaseRecord>& cases, const GateParams& params,
                                double dice_fail_threshold = 0.75) {
    if (cases.empty()) throw std::invalid_argument("evaluate_gate: empty cohort");
    for (const CaseRecord& c : cases) {
        if (!c.true_dice)
            throw data_error("case '" + c.id + "' has no true Dice; evaluation needs ground truth");
        if (!c.score(params.score))
            throw data_error("case '" + c.id + "' is missing the selected score " +
                             score_kind_name(params.score));
    }

    GateReport rep;
    rep.score = params.score;
    rep.threshold = params.threshold;
    rep.flag_when = params.flag_when;
    rep.positive = params.positive;
    rep.dice_fail_threshold = dice_fail_threshold;
    rep.flagged_ids = apply_gate(cases, params).flagged;

    std::vector<const CaseRecord*> all;
    for (const CaseRecord& c : cases) all.push_back(&c);
    rep.overall = detail::gate_stats(all, params, dice_fail_threshold);

    std::map<int, std::vector<const CaseRecord*>> by_fold;
    for (const CaseRecord& c : cases)
        if (c.fold) by_fold[*c.fold].push_back(&c);
    for (const auto& [fold, members] : by_fold)
        rep.per_fold.emplace_back(fold, detail::gate_stats(members, params, dice_fail_threshold));
    if (!rep.per_fold.empty()) {
        rep.fold_mean = detail::aggregate_folds(rep.per_fold, /*use_median=*/false);
        rep.fold_median = detail::aggregate_folds(rep.per_fold, /*use_median=*/true);
    }
    return rep;
}

namespace detail {

inline std::string format_opt(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("undefined");
}

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline nlohmann::json stats_json(const GateStats& st) {
    nlohmann::json j;
    j["n_total"] = st.n_total;
    j["n_flagged"] = st.n_flagged;
    j["mean_dice_before"] = st.mean_dice_before;
    j["median_dice_before"] = st.median_dice_before;
    j["mean_dice_after"] = opt_json(st.mean_dice_after);
    j["median_dice_after"] = opt_json(st.median_dice_after);
    j["precision"] = opt_json(st.precision);
    j["recall"] = opt_json(st.recall);
    j["pearson_r"] = opt_json(st.pearson_r);
    j["mae"] = opt_json(st.mae);
    return j;
}

inline GateStats stats_from_json(const nlohmann::json& j) {
    GateStats st;
    st.n_total = j.at("n_total").get<std::size_t>();
    st.n_flagged = j.at("n_flagged").get<std::size_t>();
    st.mean_dice_before = j.at("mean_dice_before").get<double>();
    st.median_dice_before = j.at("median_dice_before").get<double>();
    st.mean_dice_after = opt_from_json(j.at("mean_dice_after"));
    st.median_dice_after = opt_from_json(j.at("median_dice_after"));
    st.precision = opt_from_json(j.at("precision"));
    st.recall = opt_from_json(j.at("recall"));
    st.pearson_r = opt_from_json(j.at("pearson_r"));
    st.mae = opt_from_json(j.at("mae"));
    return st;
}

inline nlohmann::json aggregate_json(const GateStatsAggregate& a) {
    nlohmann::json j;
    j["n_total"] = opt_json(a.n_total);
    j["n_flagged"] = opt_json(a.n_flagged);
    j["mean_dice_before"] = opt_json(a.mean_dice_before);
    j["median_dice_before"] = opt_json(a.median_dice_before);
    j["mean_dice_after"] = opt_json(a.mean_dice_after);
    j["median_dice_after"] = opt_json(a.median_dice_after);
    j["precision"] = opt_json(a.precision);
    j["recall"] = opt_json(a.recall);
    j["pearson_r"] = opt_json(a.pearson_r);
    j["mae"] = opt_json(a.mae);
    return j;
}

inline GateStatsAggregate aggregate_from_json(const nlohmann::json& j) {
    GateStatsAggregate a;
    a.n_total = opt_from_json(j.at("n_total"));
    a.n_flagged = opt_from_json(j.at("n_flagged"));
    a.mean_dice_before = opt_from_json(j.at("mean_dice_before"));
    a.median_dice_before = opt_from_json(j.at("median_dice_before"));
    a.mean_dice_after = opt_from_json(j.at("mean_dice_after"));
    a.median_dice_after = opt_from_json(j.at("median_dice_after"));
    a.precision = opt_from_json(j.at("precision"));
    a.recall = opt_from_json(j.at("recall"));
    a.pearson_r = opt_from_json(j.at("pearson_r"));
    a.mae = opt_from_json(j.at("mae"));
    return a;
}

}  // namespace detail

inline nlohmann::json report_to_json(const GateReport& rep) {
    nlohmann::json j;
    j["format"] = "segqc-gate-report";
    j["schema_version"] = 1;
    j["score"] = score_kind_name(rep.score);
    j["threshold"] = rep.threshold;
    j["flag_when"] = flag_when_name(rep.flag_when);
    j["positive_class"] = positive_class_name(rep.positive);
    j["dice_fail_threshold"] = rep.dice_fail_threshold;
    j["flagged_ids"] = rep.flagged_ids;
    j["overall"] = detail::stats_json(rep.overall);
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& [fold, st] : rep.per_fold) {
        nlohmann::json f = detail::stats_json(st);
        f["fold"] = fold;
        folds.push_back(f);
    }
    j["per_fold"] = folds;
    j["fold_mean"] = rep.fold_mean ? detail::aggregate_json(*rep.fold_mean) : nlohmann::json(nullptr);
    j["fold_median"] =
        rep.fold_median ? detail::aggregate_json(*rep.fold_median) : nlohmann::json(nullptr);
    return j;
}

inline GateReport report_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"] != "segqc-gate-report")
        throw data_error("not a segqc gate report");
    if (j.at("schema_version").get<int>() != 1)
        throw data_error("unsupported gate report schema version");
    GateReport rep;
    rep.score = score_kind_from_name(j.at("score").get<std::string>());
    rep.threshold = j.at("threshold").get<double>();
    rep.flag_when = flag_when_from_name(j.at("flag_when").get<std::string>());
    rep.positive = positive_class_from_name(j.at("positive_class").get<std::string>());
    rep.dice_fail_threshold = j.at("dice_fail_threshold").get<double>();
    rep.flagged_ids = j.at("flagged_ids").get<std::vector<std::string>>();
    rep.overall = detail::stats_from_json(j.at("overall"));
    for (const auto& f : j.at("per_fold"))
        rep.per_fold.emplace_back(f.at("fold").get<int>(), detail::stats_from_json(f));
    if (!j.at("fold_mean").is_null())
        rep.fold_mean = detail::aggregate_from_json(j.at("fold_mean"));
    if (!j.at("fold_median").is_null())
        rep.fold_median = detail::aggregate_from_json(j.at("fold_median"));
    return rep;
}

namespace detail {

// The Table-1 metric block: exactly these six rows, in this order.
template <typename Stats>
void append_metric_rows(std::ostringstream& os, const Stats& st) {
    auto row = [&](const char* label, const std::string& value) {
        os << "  " << label;
        for (std::size_t i = std::string(label).size(); i < 36; ++i) os << ' ';
        os << value << "\n";
    };
    row("Correlation coefficient", format_opt(st.pearson_r));
    row("Dice after filtering", format_opt(st.median_dice_after));
    row("Precision", format_opt(st.precision));
    row("Recall", format_opt(st.recall));
    if constexpr (std::is_same_v<Stats, GateStats>)
        row("N failed segmentations identified", std::to_string(st.n_flagged));
    else
        row("N failed segmentations identified", format_opt(st.n_flagged));
    row("MAE", format_opt(st.mae));
}

}  // namespace detail

/// Human-readable report: a preamble describing the gate, then the Table-1
/// metric row set (indented) for the cohort and for each fold.
inline std::string report_to_text(const GateReport& rep) {
    std::ostringstream os;
    os << "== QC gate report ==\n";
    os << "score=" << score_kind_name(rep.score) << " threshold="
       << detail::format_double(rep.threshold) << " flag_when=" << flag_when_name(rep.flag_when)
       << " positive_class=" << positive_class_name(rep.positive)
       << " dice_fail_threshold=" << detail::format_double(rep.dice_fail_threshold) << "\n";
    os << "cases=" << rep.overall.n_total << " flagged=" << rep.overall.n_flagged << "\n";
    os << "median Dice before filtering: "
       << detail::format_double(rep.overall.median_dice_before)
       << " (mean " << detail::format_double(rep.overall.mean_dice_before) << ")\n";
    os << "[overall]\n";
    detail::append_metric_rows(os, rep.overall);
    for (const auto& [fold, st] : rep.per_fold) {
        os << "[fold " << fold << "]\n";
        detail::append_metric_rows(os, st);
    }
    if (rep.fold_mean) {
        os << "[fold mean]\n";
        detail::append_metric_rows(os, *rep.fold_mean);
    }
    if (rep.fold_median) {
        os << "[fold median]\n";
        detail::append_metric_rows(os, *rep.fold_median);
    }
    return os.str();
}

inline std::string report_to_csv(const GateReport& rep) {
    std::ostringstream os;
    os << "scope,fold,n_total,n_flagged,mean_dice_before,median_dice_before,mean_dice_after,"
          "median_dice_after,precision,recall,pearson_r,mae\n";
    auto stats_row = [&](const std::string& scope, const std::string& fold, const GateStats& st) {
        os << scope << ',' << fold << ',' << st.n_total << ',' << st.n_flagged << ','
           << detail::format_double(st.mean_dice_before) << ','
           << detail::format_double(st.median_dice_before) << ','
           << detail::format_opt(st.mean_dice_after) << ','
           << detail::format_opt(st.median_dice_after) << ',' << detail::format_opt(st.precision)
           << ',' << detail::format_opt(st.recall) << ',' << detail::format_opt(st.pearson_r)
           << ',' << detail::format_opt(st.mae) << "\n";
    };
    stats_row("overall", "", rep.overall);
    for (const auto& [fold, st] : rep.per_fold) stats_row("fold", std::to_string(fold), st);
    auto agg_row = [&](const std::string& scope, const GateStatsAggregate& a) {
        os << scope << ",," << detail::format_opt(a.n_total) << ','
           << detail::format_opt(a.n_flagged) << ',' << detail::format_opt(a.mean_dice_before)
           << ',' << detail::format_opt(a.median_dice_before) << ','
           << detail::format_opt(a.mean_dice_after) << ','
           << detail::format_opt(a.median_dice_after) << ',' << detail::format_opt(a.precision)
           << ',' << detail::format_opt(a.recall) << ',' << detail::format_opt(a.pearson_r) << ','
           << detail::format_opt(a.mae) << "\n";
    };
    if (rep.fold_mean) agg_row("fold_mean", *rep.fold_mean);
    if (rep.fold_median) agg_row("fold_median", *rep.fold_median);
    return os.str();
}

enum class ReportFormat { json, text, csv };

inline void write_report(const GateReport& rep, ReportFormat format,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    switch (format) {
        case ReportFormat::json: out << report_to_json(rep).dump(2) << "\n"; break;
        case ReportFormat::text: out << report_to_text(rep); break;
        case ReportFormat::csv: out << report_to_csv(rep); break;
    }
    if (!out) throw data_error("report write failed: " + path.string());
}

// ---- cohort CSV (CaseRecord rows) ----

inline const char* kCasesCsvHeader = "id,fold,true_dice,uncertainty_vs,error_vs,predicted_dice";

/// Rows sorted by case id; empty cells are absent optionals. Plain CSV
/// without quoting, so ids and paths must not contain commas.
inline void write_cases_csv(const std::vector<CaseRecord>& cases,
                            const std::filesystem::path& path) {
    std::vector<CaseRecord> sorted = cases;
    std::sort(sorted.begin(), sorted.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.id < b.id; });
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out << kCasesCsvHeader << "\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? detail::format_double(*v) : std::string();
    };
    for (const CaseRecord& c : sorted) {
        out << c.id << ',' << (c.fold ? std::to_string(*c.fold) : std::string()) << ','
            << cell(c.true_dice) << ',' << cell(c.uncertainty_vs) << ',' << cell(c.error_vs)
            << ',' << cell(c.predicted_dice) << "\n";
    }
    if (!out) throw data_error("cases write failed: " + path.string());
}

inline std::vector<CaseRecord> read_cases_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open cases file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty cases file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCasesCsvHeader)
        throw data_error("bad cases header in " + path.string() + " (expected '" +
                         kCasesCsvHeader + "')");
    std::vector<CaseRecord> cases;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        if (f.size() != 6) throw data_error(ctx + ": expected 6 fields, got " +
                                            std::to_string(f.size()));
        CaseRecord c;
        c.id = f[0];
        if (!f[1].empty()) {
            try {
                c.fold = std::stoi(f[1]);
            } catch (const std::exception&) {
                throw data_error(ctx + ": cannot parse fold '" + f[1] + "'");
            }
        }
        c.true_dice = detail::parse_opt_double(f[2], ctx);
        c.uncertainty_vs = detail::parse_opt_double(f[3], ctx);
        c.error_vs = detail::parse_opt_double(f[4], ctx);
        c.predicted_dice = detail::parse_opt_double(f[5], ctx);
        c.validate();
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace segqc
