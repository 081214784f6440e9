#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "gssl/checkpoint.hpp"
#include "gssl/config.hpp"
#include "gssl/evaluation.hpp"
#include "gssl/metrics.hpp"
#include "gssl/pipeline.hpp"

namespace gssl::cli {

namespace fs = std::filesystem;

namespace {

// Bad arguments discovered after parsing (unknown ablation, missing input).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
};

struct Context {
    ExperimentConfig cfg;
    fs::path out;
    fs::path data_root;
};

std::string default_output_root() {
    const char* env = std::getenv("GSSL_OUTPUT_ROOT");
    return env && *env ? env : "runs";
}

Context resolve(const CommonOptions& opts) {
    Context ctx;
    ctx.cfg = opts.config.empty() ? parse_config("{}", opts.overrides)
                                  : load_config(opts.config, opts.overrides);
    ctx.out = opts.out.empty() ? fs::path(default_output_root()) : fs::path(opts.out);
    const fs::path root(ctx.cfg.data.root);
    ctx.data_root = root.is_absolute() ? root : ctx.out / root;
    return ctx;
}

void write_snapshot(const fs::path& dir, const ExperimentConfig& cfg) {
    write_text_file(dir / "config.resolved.json", config_to_json(cfg));
}

Benchmark load_domains(const Context& ctx, std::vector<std::string> domains) {
    return load_benchmark(ctx.data_root, domains);
}

const DomainData& domain_of(const Benchmark& bench, const std::string& name) {
    const auto it = bench.find(name);
    if (it == bench.end()) throw std::runtime_error("domain '" + name + "' not loaded");
    return it->second;
}

std::vector<PixelRecord> records_for(const Context& ctx, const ModelState& m, const Benchmark& bench,
                                     const std::string& domain) {
    const PrototypeBank protos =
        source_prototypes(m, domain_of(bench, ctx.cfg.data.source).train, ctx.cfg.eval.batch);
    return evaluate_records(m, protos, domain_of(bench, domain).test, ctx.cfg.eval.batch);
}

void write_curves(const fs::path& path, const SweepSummary& s) {
    std::ostringstream os;
    write_curve_csv(os, s);
    write_text_file(path, os.str());
}

void print_summary(std::ostream& out, const std::string& label, const SweepSummary& s) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s: auroc=%.6f aupr=%.6f max_f%.2g=%.6f max_amd=%.6f\n",
                  label.c_str(), s.auroc.value_or(-1.0), s.aupr.value_or(-1.0), s.beta,
                  s.best_fbeta.f_beta, s.best_amd.a_md);
    out << buf;
}

ModelState train_and_save(const Context& ctx, const fs::path& dir, const std::optional<fs::path>& from,
                          std::ostream& out) {
    const Benchmark bench = load_domains(ctx, required_domains(ctx.cfg));
    std::optional<ModelState> pretrained;
    std::string parent;
    if (from) {
        pretrained = load_checkpoint(*from).model;
        parent = checkpoint_digest(*from);
    }
    RunArtifacts art;
    const ModelState m = run_training(ctx.cfg, bench, pretrained, &art, dir);
    const std::size_t steps = (from ? 0 : ctx.cfg.train.steps_pretrain) +
                              (ctx.cfg.train.ablation == Ablation::no_ssl
                                   ? 0
                                   : ctx.cfg.train.steps_ssl * ctx.cfg.train.curriculum.size());
    if (!art.checkpoint_digests.empty()) parent = art.checkpoint_digests.back();
    const fs::path final_dir = dir / "checkpoints" / "final";
    save_checkpoint(final_dir, m, {steps, hex64(config_hash(ctx.cfg)), parent});
    out << "final checkpoint " << final_dir.string() << " digest " << checkpoint_digest(final_dir)
        << "\n";
    return m;
}

int cmd_generate(const Context& ctx, std::ostream& out) {
    const Benchmark bench = generate_benchmark(ctx.cfg.data);
    save_benchmark(bench, ctx.data_root);
    write_snapshot(ctx.out, ctx.cfg);
    for (const auto& [name, d] : bench) {
        out << name << ": " << d.train.size() << " train, " << d.test.size() << " test -> "
            << dataset_dir(ctx.data_root, name, "train").parent_path().string() << "\n";
    }
    return kSuccess;
}

int cmd_pretrain(const Context& ctx, std::ostream& out) {
    const Benchmark bench = load_domains(ctx, {ctx.cfg.data.source});
    write_snapshot(ctx.out, ctx.cfg);
    RunArtifacts art;
    run_pretrain(ctx.cfg, domain_of(bench, ctx.cfg.data.source).train, &art, ctx.out);
    const auto& last = art.pretrain_log.back().losses;
    out << "pretrain: " << art.pretrain_log.size() << " steps, final l_s=" << last.l_s
        << " l_u=" << last.l_u << "\n";
    out << "checkpoint digest " << art.checkpoint_digests.back() << "\n";
    return kSuccess;
}

int cmd_train(const Context& ctx, const std::string& from, std::ostream& out) {
    write_snapshot(ctx.out, ctx.cfg);
    train_and_save(ctx, ctx.out, from.empty() ? std::nullopt : std::optional<fs::path>(from), out);
    return kSuccess;
}

fs::path checkpoint_or_default(const Context& ctx, const std::string& path) {
    return path.empty() ? ctx.out / "checkpoints" / "final" : fs::path(path);
}

int cmd_eval(const Context& ctx, const std::string& checkpoint, std::string domain,
             bool use_trained, std::ostream& out) {
    if (domain.empty()) domain = ctx.cfg.eval.test_domain;
    const LoadedCheckpoint ck = load_checkpoint(checkpoint_or_default(ctx, checkpoint));
    if (use_trained && !ck.model.gamma) {
        throw std::runtime_error("checkpoint has no trained gamma; run SSL training first");
    }
    const Benchmark bench = load_domains(ctx, {ctx.cfg.data.source, domain});
    const auto records = records_for(ctx, ck.model, bench, domain);
    const fs::path dir = ctx.out / "eval" / domain;
    write_snapshot(dir, ctx.cfg);
    write_records(dir / "records.gt", records);
    const SweepSummary s = sweep(records, ctx.cfg.eval.beta);
    const std::optional<double> gamma = use_trained ? ck.model.gamma : std::nullopt;
    write_text_file(dir / "summary.json", sweep_summary_json(s, records, gamma));
    print_summary(out, domain, s);
    if (gamma) {
        const CurvePoint p = evaluate_threshold(records, threshold_from_gamma(*gamma), ctx.cfg.eval.beta);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "trained gamma=%.6f: f_beta=%.6f a_md=%.6f p_ac=%.6f\n",
                      *gamma, p.f_beta, p.a_md, p.p_ac);
        out << buf;
    }
    return kSuccess;
}

int cmd_sweep(const Context& ctx, const std::string& records_path, const std::string& checkpoint,
              std::string domain, std::ostream& out) {
    std::vector<PixelRecord> records;
    std::string label;
    if (!records_path.empty()) {
        records = read_records(records_path);
        label = fs::path(records_path).stem().string();
    } else {
        if (domain.empty()) domain = ctx.cfg.eval.test_domain;
        const LoadedCheckpoint ck = load_checkpoint(checkpoint_or_default(ctx, checkpoint));
        const Benchmark bench = load_domains(ctx, {ctx.cfg.data.source, domain});
        records = records_for(ctx, ck.model, bench, domain);
        label = domain;
    }
    const fs::path dir = ctx.out / "sweep" / label;
    write_snapshot(dir, ctx.cfg);
    const SweepSummary s = sweep(records, ctx.cfg.eval.beta);
    write_curves(dir / "curve.csv", s);
    write_text_file(dir / "summary.json", sweep_summary_json(s, records, std::nullopt));
    print_summary(out, label, s);
    return kSuccess;
}

int cmd_protocols(const Context& ctx, const std::string& checkpoint, std::ostream& out) {
    const LoadedCheckpoint ck = load_checkpoint(checkpoint_or_default(ctx, checkpoint));
    const std::string& test = ctx.cfg.eval.test_domain;
    const std::string& from = ctx.cfg.eval.cross_domain_from;
    const Benchmark bench = load_domains(ctx, {ctx.cfg.data.source, test, from});
    const auto test_records = records_for(ctx, ck.model, bench, test);
    const auto from_records = records_for(ctx, ck.model, bench, from);
    const fs::path dir = ctx.out / "protocols";
    write_snapshot(dir, ctx.cfg);
    const ProtocolReport report =
        threshold_protocols(test_records, ck.model.gamma, ctx.cfg.eval.validation_sizes,
                            ctx.cfg.eval.trials, ctx.cfg.train.seed, ctx.cfg.eval.beta);
    write_text_file(dir / "protocols.json", protocol_report_json(report));
    const CrossDomainReport cross = cross_domain(from_records, test_records, ctx.cfg.eval.beta);
    write_text_file(dir / "cross_domain.json", cross_domain_json(cross, from, test));
    for (const auto& r : report.by_size) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "validation images %zu: mean f_beta %.6f (optimal %.6f)\n",
                      r.validation_images, mean_of(r.achieved_fbeta), mean_of(r.optimal_fbeta));
        out << buf;
    }
    if (report.zero_validation) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "zero validation: f_beta %.6f at gamma %.6f (max %.6f)\n",
                      report.zero_validation->at_gamma.f_beta, report.zero_validation->gamma,
                      report.zero_validation->max_fbeta);
        out << buf;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "cross domain %s -> %s: delta f_beta %.6f\n", from.c_str(),
                  test.c_str(), cross.delta);
    out << buf;
    return kSuccess;
}

int cmd_ablate(Context ctx, const std::string& name, std::ostream& out) {
    try {
        ctx.cfg.train.ablation = parse_ablation(name);
    } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
    }
    const fs::path dir = ctx.out / "ablations" / name;
    write_snapshot(dir, ctx.cfg);
    const ModelState m = train_and_save(ctx, dir, std::nullopt, out);
    const std::string& test = ctx.cfg.eval.test_domain;
    const Benchmark bench = load_domains(ctx, {ctx.cfg.data.source, test});
    const auto records = records_for(ctx, m, bench, test);
    write_records(dir / "records.gt", records);
    const SweepSummary s = sweep(records, ctx.cfg.eval.beta);
    write_curves(dir / "curve.csv", s);
    write_text_file(dir / "summary.json", sweep_summary_json(s, records, m.gamma));
    print_summary(out, name + " on " + test, s);
    return kSuccess;
}

int cmd_export(const Context& ctx, const std::string& records_path, const std::string& output,
               std::ostream& out) {
    const auto records = read_records(records_path);
    const fs::path path = output.empty() ? ctx.out / "curves.csv" : fs::path(output);
    write_snapshot(path.parent_path().empty() ? fs::path(".") : path.parent_path(), ctx.cfg);
    write_curves(path, sweep(records, ctx.cfg.eval.beta));
    out << "wrote " << path.string() << "\n";
    return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Uncertainty-aware segmentation with gamma-thresholded self-supervision", "gssl"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    CommonOptions common;
    app.add_option("-c,--config", common.config, "JSON config layered over the defaults")
        ->check(CLI::ExistingFile);
    app.add_option("--set", common.overrides, "Dotted override, e.g. train.seed=3 (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("-o,--out", common.out, "Output directory (default: $GSSL_OUTPUT_ROOT or runs)");

    std::string checkpoint, domain, records, output, from, ablation;
    bool use_trained = false;

    auto* gen = app.add_subcommand("generate-data", "Render the synthetic benchmark");
    auto* pre = app.add_subcommand("pretrain", "Supervised pretraining on the source domain");
    auto* train = app.add_subcommand("train", "Pretraining followed by the SSL curriculum");
    train->add_option("--from", from, "Start SSL from this pretrain checkpoint")->check(CLI::ExistingDirectory);
    auto* eval = app.add_subcommand("eval", "Per-pixel records and summary for one domain");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory (default: <out>/checkpoints/final)");
    eval->add_option("--domain", domain, "Test domain (default: eval.test_domain)");
    eval->add_flag("--use-trained-threshold", use_trained, "Also report F_beta at the trained gamma");
    auto* sw = app.add_subcommand("sweep", "Threshold sweep to curve CSV");
    auto* sw_records = sw->add_option("--records", records, "Record dump written by eval");
    sw->add_option("--checkpoint", checkpoint, "Checkpoint directory")->excludes(sw_records);
    sw->add_option("--domain", domain, "Test domain when evaluating a checkpoint");
    auto* proto = app.add_subcommand("protocols", "Validation-size and cross-domain threshold reports");
    proto->add_option("--checkpoint", checkpoint, "Checkpoint directory (default: <out>/checkpoints/final)");
    auto* abl = app.add_subcommand("ablate", "Train and evaluate one named ablation");
    abl->add_option("name", ablation, "Ablation name")->required();
    auto* exp = app.add_subcommand("export-curves", "Curve CSV from a record dump");
    exp->add_option("--records", records, "Record dump written by eval")->required()->check(CLI::ExistingFile);
    exp->add_option("--output", output, "CSV path (default: <out>/curves.csv)");

    std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 consumes from the back
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n\n" << app.help();
        return kUsageError;
    }

    try {
        const Context ctx = resolve(common);
        if (gen->parsed()) return cmd_generate(ctx, out);
        if (pre->parsed()) return cmd_pretrain(ctx, out);
        if (train->parsed()) return cmd_train(ctx, from, out);
        if (eval->parsed()) return cmd_eval(ctx, checkpoint, domain, use_trained, out);
        if (sw->parsed()) {
            if (records.empty() && checkpoint.empty() && !fs::exists(ctx.out / "checkpoints" / "final")) {
                throw UsageError("sweep needs --records or --checkpoint");
            }
            return cmd_sweep(ctx, records, checkpoint, domain, out);
        }
        if (proto->parsed()) return cmd_protocols(ctx, checkpoint, out);
        if (abl->parsed()) return cmd_ablate(ctx, ablation, out);
        if (exp->parsed()) return cmd_export(ctx, records, output, out);
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << "\n";
        return kUsageError;
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return kUsageError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kRuntimeError;
    }
    err << app.help();
    return kUsageError;
}

}  // namespace gssl::cli
