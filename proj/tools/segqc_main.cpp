// segqc command-line tool: synthetic cohorts, per-case QC maps and scores,
// Dice-regressor training with k-fold cross-validation, failure gating and
// report emission.
//
// Exit codes: 0 ok, 2 bad configuration, 3 I/O or parse failure,
// 4 degenerate statistics, 5 internal invariant violation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "segqc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace segqc;

namespace {

GridShape parse_shape(const std::string& s) {
    std::vector<std::size_t> dims;
    try {
        std::string cur;
        for (char ch : s + ",") {
            if (ch == ',') {
                if (!cur.empty()) dims.push_back(std::stoull(cur));
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
    } catch (const std::exception&) {
        throw config_error("--shape expects N or NX,NY,NZ, got '" + s + "'");
    }
    if (dims.size() == 1) return GridShape{dims[0], dims[0], dims[0]};
    if (dims.size() == 3) return GridShape{dims[0], dims[1], dims[2]};
    throw config_error("--shape expects N or NX,NY,NZ, got '" + s + "'");
}

std::pair<double, double> parse_range(const std::string& s, const char* flag) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw config_error(std::string(flag) + " expects LO:HI, got '" + s + "'");
    try {
        return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
    } catch (const std::exception&) {
        throw config_error(std::string(flag) + " expects LO:HI, got '" + s + "'");
    }
}

std::vector<double> parse_double_list(const std::string& s, const char* flag) {
    std::vector<double> vals;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) {
                try {
                    vals.push_back(std::stod(cur));
                } catch (const std::exception&) {
                    throw config_error(std::string(flag) + ": cannot parse '" + cur + "'");
                }
            }
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    return vals;
}

VolumeFormat parse_format(const std::string& s) {
    if (s == "rvol") return VolumeFormat::rawvol;
    if (s == "nii") return VolumeFormat::nii;
    throw config_error("--format must be rvol or nii, got '" + s + "'");
}

const char* format_ext(VolumeFormat f) {
    return f == VolumeFormat::rawvol ? ".rvol.json" : ".nii";
}

struct SynthArgs {
    std::string out;
    std::size_t cases = 40;
    std::string shape = "32";
    std::size_t samples = 20;
    std::uint64_t seed = 0;
    std::string q_ramp = "0:1";
    std::string q_list;
    std::string lesions = "2:4";
    std::string radius = "3:6";
    double recon_noise = 0.05;
    std::string format = "rvol";
    bool force = false;
};

int run_synth(const SynthArgs& a) {
    SynthParams params;
    params.shape = parse_shape(a.shape);
    params.sample_count = a.samples;
    params.seed = a.seed;
    const auto lesions = parse_range(a.lesions, "--lesions");
    params.lesion_count_min = static_cast<std::size_t>(lesions.first);
    params.lesion_count_max = static_cast<std::size_t>(lesions.second);
    const auto radius = parse_range(a.radius, "--radius");
    params.radius_min = radius.first;
    params.radius_max = radius.second;
    params.recon_noise = a.recon_noise;

    std::vector<double> schedule;
    if (!a.q_list.empty()) {
        schedule = parse_double_list(a.q_list, "--q-list");
        if (schedule.size() != a.cases)
            throw config_error("--q-list length " + std::to_string(schedule.size()) +
                               " does not match --cases " + std::to_string(a.cases));
    } else {
        const auto ramp = parse_range(a.q_ramp, "--q-ramp");
        for (std::size_t i = 0; i < a.cases; ++i) {
            const double t = a.cases > 1
                                 ? static_cast<double>(i) / static_cast<double>(a.cases - 1)
                                 : 0.0;
            schedule.push_back(std::clamp(ramp.first + (ramp.second - ramp.first) * t, 0.0, 1.0));
        }
    }
    for (double q : schedule)
        if (!(q >= 0.0 && q <= 1.0))
            throw config_error("--q-list values must lie in [0,1]");

    const fs::path out_dir(a.out);
    pipeline::require_writable(out_dir / "cohort.csv", a.force);
    generate_cohort(params, schedule, out_dir, parse_format(a.format));

    nlohmann::json cfg{{"out", a.out},       {"cases", a.cases},
                       {"shape", a.shape},   {"samples", a.samples},
                       {"seed", a.seed},     {"q_ramp", a.q_ramp},
                       {"q_list", a.q_list}, {"lesions", a.lesions},
                       {"radius", a.radius}, {"recon_noise", a.recon_noise},
                       {"format", a.format}};
    pipeline::write_run_manifest(out_dir / "run_manifest.json", "synth", cfg);
    std::cout << "wrote " << schedule.size() << " cases to " << out_dir.string() << "\n";
    return 0;
}

struct ScoreArgs {
    std::string cohort;
    std::string out;
    bool absolute_error_vs = false;
    bool force = false;
};

int run_score(const ScoreArgs& a) {
    const CohortManifest manifest = read_manifest(a.cohort);
    pipeline::ScoreOptions opts;
    opts.absolute_error_vs = a.absolute_error_vs;
    const std::vector<CaseRecord> cases = pipeline::score_cohort(manifest, opts);
    pipeline::require_writable(a.out, a.force);
    write_cases_csv(cases, a.out);
    nlohmann::json cfg{{"cohort", a.cohort},
                       {"out", a.out},
                       {"absolute_error_vs", a.absolute_error_vs}};
    pipeline::write_run_manifest(a.out + ".manifest.json", "score", cfg);
    std::cout << "scored " << cases.size() << " cases -> " << a.out << "\n";
    return 0;
}

struct MapsArgs {
    std::string out;
    std::vector<std::string> samples;
    std::string format = "rvol";
    bool force = false;
};

int run_maps(const MapsArgs& a) {
    std::vector<fs::path> paths(a.samples.begin(), a.samples.end());
    const pipeline::MapsResult r = pipeline::compute_maps(paths);
    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    const VolumeFormat fmt = parse_format(a.format);
    const fs::path mean_path = out_dir / (std::string("mean_map") + format_ext(fmt));
    const fs::path unc_path = out_dir / (std::string("uncertainty_map") + format_ext(fmt));
    pipeline::require_writable(mean_path, a.force);
    pipeline::require_writable(unc_path, a.force);
    save_volume(r.mean_map, mean_path);
    save_volume(r.uncertainty_map, unc_path);  // f32 default encoding

    nlohmann::json summary{{"format", "segqc-maps-summary"},
                           {"schema_version", 1},
                           {"n_samples", a.samples.size()},
                           {"uncertainty_vs", r.uncertainty_vs}};
    std::ofstream sum(out_dir / "maps_summary.json", std::ios::trunc);
    sum << summary.dump(2) << "\n";

    nlohmann::json cfg{{"out", a.out}, {"samples", a.samples}, {"format", a.format}};
    pipeline::write_run_manifest(out_dir / "run_manifest.json", "maps", cfg);
    std::cout << "uncertainty_vs=" << detail::format_double(r.uncertainty_vs) << "\n";
    return 0;
}

struct ErrmapArgs {
    std::string original;
    std::string recon;
    std::string out;
    bool absolute = false;
    std::string format = "rvol";
    bool force = false;
};

int run_errmap(const ErrmapArgs& a) {
    const pipeline::ErrmapResult r = pipeline::compute_errmap(a.original, a.recon, a.absolute);
    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    const fs::path map_path =
        out_dir / (std::string("error_map") + format_ext(parse_format(a.format)));
    pipeline::require_writable(map_path, a.force);
    save_volume(r.map, map_path);

    nlohmann::json summary{{"format", "segqc-errmap-summary"},
                           {"schema_version", 1},
                           {"absolute", r.absolute},
                           {"error_vs", r.error_vs}};
    std::ofstream sum(out_dir / "errmap_summary.json", std::ios::trunc);
    sum << summary.dump(2) << "\n";

    nlohmann::json cfg{{"original", a.original},
                       {"recon", a.recon},
                       {"out", a.out},
                       {"absolute", a.absolute},
                       {"format", a.format}};
    pipeline::write_run_manifest(out_dir / "run_manifest.json", "errmap", cfg);
    std::cout << "error_vs=" << detail::format_double(r.error_vs) << "\n";
    return 0;
}

struct TrainArgs {
    std::string cohort;
    std::string cases;
    std::string out;
    std::string pair_kind = "uncertainty";
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::size_t epochs = 200;
    std::size_t batch = 8;
    std::size_t hidden = 16;
    double lr = 1e-3;
    double delta = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool force = false;
};

int run_train(const TrainArgs& a) {
    const CohortManifest manifest = read_manifest(a.cohort);
    const std::vector<CaseRecord> cases = read_cases_csv(a.cases);
    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.beta1 = a.beta1;
    cfg.beta2 = a.beta2;
    cfg.epsilon = a.adam_eps;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.hidden_width = a.hidden;
    cfg.huber_delta = a.delta;
    cfg.seed = a.seed;

    const PairKind kind = pair_kind_from_name(a.pair_kind);
    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    pipeline::require_writable(out_dir / "predictions.csv", a.force);

    const pipeline::TrainOutcome outcome =
        pipeline::train_cohort(manifest, cases, kind, a.folds, cfg);

    pipeline::write_folds_csv(outcome.fold_of, out_dir / "folds.csv");
    for (std::size_t k = 0; k < outcome.models.size(); ++k) {
        char name[48];
        std::snprintf(name, sizeof(name), "model_fold_%zu.json", k);
        save_model(outcome.models[k], out_dir / name);
    }
    write_cases_csv(outcome.predictions, out_dir / "predictions.csv");
    {
        std::ofstream sum(out_dir / "train_summary.json", std::ios::trunc);
        sum << pipeline::train_summary_json(outcome, cfg).dump(2) << "\n";
    }

    nlohmann::json cfg_json{{"cohort", a.cohort}, {"cases", a.cases},
                            {"out", a.out},       {"pair_kind", a.pair_kind},
                            {"folds", a.folds},   {"seed", a.seed},
                            {"epochs", a.epochs}, {"batch", a.batch},
                            {"hidden", a.hidden}, {"lr", a.lr},
                            {"delta", a.delta},   {"beta1", a.beta1},
                            {"beta2", a.beta2},   {"adam_eps", a.adam_eps}};
    pipeline::write_run_manifest(out_dir / "run_manifest.json", "train", cfg_json);
    std::cout << "trained " << outcome.models.size() << " fold models -> " << a.out << "\n";
    return 0;
}

struct PredictArgs {
    std::string model;
    std::string cohort;
    std::string cases;
    std::string out;
    bool force = false;
};

int run_predict(const PredictArgs& a) {
    const RegressorModel model = load_model(a.model);
    const CohortManifest manifest = read_manifest(a.cohort);
    const std::vector<CaseRecord> cases = read_cases_csv(a.cases);
    const std::vector<CaseRecord> predicted = pipeline::predict_cases(model, manifest, cases);
    pipeline::require_writable(a.out, a.force);
    write_cases_csv(predicted, a.out);
    nlohmann::json cfg{{"model", a.model}, {"cohort", a.cohort}, {"cases", a.cases},
                       {"out", a.out}};
    pipeline::write_run_manifest(a.out + ".manifest.json", "predict", cfg);
    std::cout << "predicted " << predicted.size() << " cases -> " << a.out << "\n";
    return 0;
}

struct GateArgs {
    std::string cases;
    std::string score;
    double threshold = 0.0;
    std::string flag = "below";
    std::string positive = "fail";
    double dice_fail_threshold = 0.75;
    std::string out;
    bool force = false;
};

int run_gate(const GateArgs& a) {
    const std::vector<CaseRecord> cases = read_cases_csv(a.cases);
    GateParams params;
    params.score = score_kind_from_name(a.score);
    params.threshold = a.threshold;
    params.flag_when = flag_when_from_name(a.flag);
    params.positive = positive_class_from_name(a.positive);
    const GateReport report = evaluate_gate(cases, params, a.dice_fail_threshold);

    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    pipeline::require_writable(out_dir / "report.json", a.force);
    write_report(report, ReportFormat::json, out_dir / "report.json");
    write_report(report, ReportFormat::text, out_dir / "report.txt");
    write_report(report, ReportFormat::csv, out_dir / "report.csv");

    nlohmann::json cfg{{"cases", a.cases},
                       {"score", a.score},
                       {"threshold", a.threshold},
                       {"flag", a.flag},
                       {"positive", a.positive},
                       {"dice_fail_threshold", a.dice_fail_threshold},
                       {"out", a.out}};
    pipeline::write_run_manifest(out_dir / "run_manifest.json", "gate", cfg);
    std::cout << report_to_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segqc: quality control toolkit for volumetric segmentation outputs"};
    app.set_version_flag("--version", std::string("segqc ") + kVersion);
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate a deterministic synthetic cohort");
    synth->set_config("--config");
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--cases", synth_args.cases, "number of cases");
    synth->add_option("--shape", synth_args.shape, "grid shape: N or NX,NY,NZ");
    synth->add_option("--samples", synth_args.samples, "MC samples per case");
    synth->add_option("--seed", synth_args.seed, "random seed");
    synth->add_option("--q-ramp", synth_args.q_ramp,
                      "degradation ramp LO:HI over the cohort (clamped to [0,1])");
    synth->add_option("--q-list", synth_args.q_list, "explicit per-case q values (overrides ramp)");
    synth->add_option("--lesions", synth_args.lesions, "lesion count range MIN:MAX");
    synth->add_option("--radius", synth_args.radius, "lesion radius range MIN:MAX (voxels)");
    synth->add_option("--recon-noise", synth_args.recon_noise, "reconstruction noise scale");
    synth->add_option("--format", synth_args.format, "volume format: rvol or nii");
    synth->add_flag("--force", synth_args.force, "overwrite existing outputs");

    ScoreArgs score_args;
    CLI::App* score = app.add_subcommand("score", "compute per-case QC scores for a cohort");
    score->set_config("--config");
    score->add_option("--cohort", score_args.cohort, "cohort manifest CSV")->required();
    score->add_option("--out", score_args.out, "output cases CSV")->required();
    score->add_flag("--absolute-error-vs", score_args.absolute_error_vs,
                    "sum |error| instead of signed error");
    score->add_flag("--force", score_args.force, "overwrite existing outputs");

    MapsArgs maps_args;
    CLI::App* maps = app.add_subcommand("maps", "average a sample stack and emit uncertainty map");
    maps->set_config("--config");
    maps->add_option("--out", maps_args.out, "output directory")->required();
    maps->add_option("--format", maps_args.format, "volume format: rvol or nii");
    maps->add_flag("--force", maps_args.force, "overwrite existing outputs");
    maps->add_option("samples", maps_args.samples, "sample probability maps (>= 2)")
        ->required()
        ->expected(-2);

    ErrmapArgs errmap_args;
    CLI::App* errmap = app.add_subcommand("errmap", "error map of original vs reconstruction");
    errmap->set_config("--config");
    errmap->add_option("--original", errmap_args.original, "original volume")->required();
    errmap->add_option("--recon", errmap_args.recon, "reconstructed volume")->required();
    errmap->add_option("--out", errmap_args.out, "output directory")->required();
    errmap->add_flag("--absolute", errmap_args.absolute, "absolute differences");
    errmap->add_option("--format", errmap_args.format, "volume format: rvol or nii");
    errmap->add_flag("--force", errmap_args.force, "overwrite existing outputs");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train the Dice regressor with k-fold CV");
    train->set_config("--config");
    train->add_option("--cohort", train_args.cohort, "cohort manifest CSV")->required();
    train->add_option("--cases", train_args.cases, "cases CSV with true_dice")->required();
    train->add_option("--out", train_args.out, "output directory")->required();
    train->add_option("--pair-kind", train_args.pair_kind, "image|uncertainty|error");
    train->add_option("--folds", train_args.folds, "cross-validation folds");
    train->add_option("--seed", train_args.seed, "random seed");
    train->add_option("--epochs", train_args.epochs, "training epochs");
    train->add_option("--batch", train_args.batch, "mini-batch size");
    train->add_option("--hidden", train_args.hidden, "hidden layer width");
    train->add_option("--lr", train_args.lr, "Adam learning rate");
    train->add_option("--delta", train_args.delta, "Huber delta");
    train->add_option("--beta1", train_args.beta1, "Adam beta1");
    train->add_option("--beta2", train_args.beta2, "Adam beta2");
    train->add_option("--adam-eps", train_args.adam_eps, "Adam epsilon");
    train->add_flag("--force", train_args.force, "overwrite existing outputs");

    PredictArgs predict_args;
    CLI::App* predict = app.add_subcommand("predict", "fill predicted Dice using a model file");
    predict->set_config("--config");
    predict->add_option("--model", predict_args.model, "model JSON file")->required();
    predict->add_option("--cohort", predict_args.cohort, "cohort manifest CSV")->required();
    predict->add_option("--cases", predict_args.cases, "cases CSV")->required();
    predict->add_option("--out", predict_args.out, "output cases CSV")->required();
    predict->add_flag("--force", predict_args.force, "overwrite existing outputs");

    GateArgs gate_args;
    CLI::App* gate = app.add_subcommand("gate", "flag failures by threshold and evaluate");
    gate->set_config("--config");
    gate->add_option("--cases", gate_args.cases, "cases CSV")->required();
    gate->add_option("--score", gate_args.score, "uncertainty_vs|error_vs|predicted_dice")
        ->required();
    gate->add_option("--threshold", gate_args.threshold, "gate threshold")->required();
    gate->add_option("--flag", gate_args.flag, "flag cases below or above the threshold")
        ->required();
    gate->add_option("--positive", gate_args.positive, "positive class: fail or pass");
    gate->add_option("--dice-fail-threshold", gate_args.dice_fail_threshold,
                     "true-failure Dice threshold");
    gate->add_option("--out", gate_args.out, "output directory")->required();
    gate->add_flag("--force", gate_args.force, "overwrite existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args);
        if (score->parsed()) return run_score(score_args);
        if (maps->parsed()) return run_maps(maps_args);
        if (errmap->parsed()) return run_errmap(errmap_args);
        if (train->parsed()) return run_train(train_args);
        if (predict->parsed()) return run_predict(predict_args);
        if (gate->parsed()) return run_gate(gate_args);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const degenerate_error& e) {
        std::cerr << "degenerate statistics: " << e.what() << "\n";
        return 4;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::range_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
}
