#include "gssl/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gssl/checkpoint.hpp"
#include "gssl/rng.hpp"

namespace gssl {

namespace {

constexpr std::uint64_t kPretrainPhase = 1;
constexpr std::uint64_t kSslPhaseBase = 16;

std::uint64_t name_tag(const std::string& name) {
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
}

void write_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
    std::ostringstream os;
    write_train_log(os, rows);
    write_text_file(path, os.str());
}

// Saves, then reloads, so the next phase starts from exactly what is on disk.
ModelState checkpoint_roundtrip(const ModelState& m, const ExperimentConfig& cfg, std::uint64_t step,
                                const std::string& parent, const std::filesystem::path& dir,
                                RunArtifacts* artifacts) {
    save_checkpoint(dir, m, {step, hex64(config_hash(cfg)), parent});
    if (artifacts) artifacts->checkpoint_digests.push_back(checkpoint_digest(dir));
    return load_checkpoint(dir).model;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

Benchmark generate_benchmark(const DataConfig& cfg) {
    Benchmark bench;
    for (const auto& d : cfg.domains) {
        DomainSpec spec;
        spec.name = d.name;
        spec.style = d.style;
        spec.include_ood = d.include_ood;
        spec.extent = cfg.extent;
        spec.n_images = cfg.n_train;
        spec.seed = derive_seed(cfg.seed, name_tag(d.name));
        DomainData data;
        data.train = generate_domain(spec);
        spec.name = d.name + "_test";
        spec.n_images = cfg.n_test;
        spec.seed = derive_seed(cfg.seed, name_tag(d.name) + 1);
        data.test = generate_domain(spec);
        if (d.name != cfg.source) {
            data.train.labels.clear();
            data.train.geometry.clear();
        }
        bench.emplace(d.name, std::move(data));
    }
    return bench;
}

std::filesystem::path dataset_dir(const std::filesystem::path& root, const std::string& domain,
                                  const std::string& split) {
    return root / domain / split;
}

void save_benchmark(const Benchmark& bench, const std::filesystem::path& root) {
    for (const auto& [name, data] : bench) {
        save_dataset(data.train, dataset_dir(root, name, "train"));
        save_dataset(data.test, dataset_dir(root, name, "test"));
    }
}

Benchmark load_benchmark(const std::filesystem::path& root, std::span<const std::string> domains) {
    for (const auto& name : domains) {
        for (const char* split : {"train", "test"}) {
            const auto dir = dataset_dir(root, name, split);
            if (!std::filesystem::exists(dir / "manifest.json")) {
                throw std::runtime_error("missing dataset " + dir.string() +
                                         " (run generate-data first)");
            }
        }
    }
    Benchmark bench;
    for (const auto& name : domains) {
        if (bench.count(name)) continue;
        bench.emplace(name, DomainData{load_dataset(dataset_dir(root, name, "train")),
                                       load_dataset(dataset_dir(root, name, "test"))});
    }
    return bench;
}

std::vector<std::string> required_domains(const ExperimentConfig& cfg) {
    std::vector<std::string> out{cfg.data.source};
    auto add = [&](const std::string& n) {
        for (const auto& o : out) {
            if (o == n) return;
        }
        out.push_back(n);
    };
    for (const auto& n : cfg.train.curriculum) add(n);
    add(cfg.eval.test_domain);
    add(cfg.eval.cross_domain_from);
    return out;
}

ModelState run_pretrain(const ExperimentConfig& cfg, const Dataset& source, RunArtifacts* artifacts,
                        const std::optional<std::filesystem::path>& out_dir) {
    ModelState m = init_model(cfg.model, cfg.train.seed);
    SgdMomentum opt(cfg.train.learning_rate, cfg.train.momentum, cfg.train.grad_clip);
    std::vector<TrainLogRow> rows;
    for (std::size_t step = 0; step < cfg.train.steps_pretrain; ++step) {
        TrainLogRow row;
        row.step = step;
        row.losses = pretrain_step(m, opt, source, cfg.train, cfg.augment, {kPretrainPhase, step});
        rows.push_back(row);
    }
    if (out_dir) {
        write_log(*out_dir / "pretrain_log.csv", rows);
        m = checkpoint_roundtrip(m, cfg, cfg.train.steps_pretrain, "",
                                 *out_dir / "checkpoints" / "pretrain", artifacts);
    } else {
        quantize_to_storage(m);
    }
    if (artifacts) artifacts->pretrain_log = std::move(rows);
    return m;
}

ModelState run_ssl(const ExperimentConfig& cfg, const ModelState& start, const Dataset& source,
                   std::span<const Dataset* const> stages, RunArtifacts* artifacts,
                   const std::optional<std::filesystem::path>& out_dir) {
    ModelState m = start.clone();
    if (cfg.train.ablation == Ablation::no_ssl || cfg.train.steps_ssl == 0) return m;
    std::vector<TrainLogRow> rows;
    std::size_t global_step = 0;
    std::string parent;
    if (out_dir && std::filesystem::exists(*out_dir / "checkpoints" / "pretrain")) {
        parent = checkpoint_digest(*out_dir / "checkpoints" / "pretrain");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        SgdMomentum opt(cfg.train.ssl_learning_rate, cfg.train.momentum, cfg.train.grad_clip);
        const std::string stage_name = "stage" + std::to_string(s + 1) + "_" + stages[s]->name;
        for (std::size_t step = 0; step < cfg.train.steps_ssl; ++step, ++global_step) {
            const StepResult r = ssl_step(m, opt, source, *stages[s], cfg.train, cfg.augment,
                                          {kSslPhaseBase + s, step});
            if (r.skipped) continue;
            TrainLogRow row;
            row.step = global_step;
            row.losses = r.losses;
            row.gamma = r.masks.gamma_used;
            row.p_consistent = r.masks.p_consistent;
            row.dominant_fraction = r.dominant_fraction;
            rows.push_back(row);
            if (out_dir && cfg.train.checkpoint_interval > 0 &&
                (step + 1) % cfg.train.checkpoint_interval == 0 && step + 1 < cfg.train.steps_ssl) {
                save_checkpoint(*out_dir / "checkpoints" / (stage_name + "_step" + std::to_string(step + 1)),
                                m, {global_step + 1, hex64(config_hash(cfg)), parent});
            }
        }
        if (out_dir) {
            const auto dir = *out_dir / "checkpoints" / stage_name;
            m = checkpoint_roundtrip(m, cfg, global_step, parent, dir, artifacts);
            parent = checkpoint_digest(dir);
        } else {
            quantize_to_storage(m);
        }
    }
    if (out_dir) write_log(*out_dir / "train_log.csv", rows);
    if (artifacts) artifacts->ssl_log = std::move(rows);
    return m;
}

ModelState run_training(const ExperimentConfig& cfg, const Benchmark& bench,
                        const std::optional<ModelState>& pretrained, RunArtifacts* artifacts,
                        const std::optional<std::filesystem::path>& out_dir) {
    const auto src = bench.find(cfg.data.source);
    if (src == bench.end()) throw std::runtime_error("source domain '" + cfg.data.source + "' not loaded");
    std::vector<const Dataset*> stages;
    for (const auto& name : cfg.train.curriculum) {
        const auto it = bench.find(name);
        if (it == bench.end()) throw std::runtime_error("curriculum domain '" + name + "' not loaded");
        stages.push_back(&it->second.train);
    }
    const ModelState start =
        pretrained ? pretrained->clone() : run_pretrain(cfg, src->second.train, artifacts, out_dir);
    return run_ssl(cfg, start, src->second.train, stages, artifacts, out_dir);
}

}  // namespace gssl
