#include "gssl/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gssl/config.hpp"
#include "gssl/tensor_io.hpp"

namespace gssl {

namespace {

using json = nlohmann::json;

StoredTensor flags_tensor(const std::vector<bool>& flags) {
    StoredTensor t{DType::u8, {flags.size()}, {}};
    for (bool f : flags) t.values.push_back(f ? 1.0 : 0.0);
    return t;
}

std::vector<bool> flags_from(const StoredTensor& t) {
    std::vector<bool> out;
    for (double v : t.values) out.push_back(v != 0.0);
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelState& m, const CheckpointMeta& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json entries = json::array();
    auto put = [&](const std::string& name, const StoredTensor& t) {
        write_tensor(dir / (name + ".gt"), t);
        entries.push_back(name);
    };
    for (const auto& p : m.params) put(p.name, to_stored(p.value, DType::f32));
    put("prototypes.vectors", to_stored(m.bank.vectors, DType::f32));
    put("prototypes.history", to_stored(m.bank.history, DType::f32));
    put("prototypes.fresh", flags_tensor(m.bank.fresh));
    put("prototypes.available", flags_tensor(m.bank.available));
    if (m.gamma) put("gamma", StoredTensor{DType::f64, {}, {*m.gamma}});
    if (!m.class_gamma.empty()) {
        put("class_gamma", StoredTensor{DType::f64, {m.class_gamma.size()}, m.class_gamma});
    }
    const auto& c = m.config;
    const json doc = {
        {"K", c.num_classes},
        {"F", c.feature_dim},
        {"tau", c.tau},
        {"head_tau", c.head_tau},
        {"downsample", kDownsample},
        {"in_channels", c.in_channels},
        {"encoder_width1", c.encoder_width1},
        {"encoder_width2", c.encoder_width2},
        {"projection_hidden", c.projection_hidden},
        {"step", meta.step},
        {"config_hash", meta.config_hash},
        {"parent_digest", meta.parent_digest},
        {"gamma", m.gamma ? json(*m.gamma) : json(nullptr)},
        {"entries", entries},
    };
    std::ofstream f(dir / "checkpoint.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / "checkpoint.json").string());
    f << doc.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto meta_path = dir / "checkpoint.json";
    std::ifstream f(meta_path);
    if (!f) throw std::runtime_error("load_checkpoint: missing " + meta_path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_checkpoint: " + meta_path.string() + ": " + e.what());
    }
    LoadedCheckpoint out;
    try {
        ModelConfig c;
        c.num_classes = doc.at("K").get<std::size_t>();
        c.feature_dim = doc.at("F").get<std::size_t>();
        c.tau = doc.at("tau").get<double>();
        c.head_tau = doc.at("head_tau").get<double>();
        c.in_channels = doc.at("in_channels").get<std::size_t>();
        c.encoder_width1 = doc.at("encoder_width1").get<std::size_t>();
        c.encoder_width2 = doc.at("encoder_width2").get<std::size_t>();
        c.projection_hidden = doc.at("projection_hidden").get<std::size_t>();
        if (doc.at("downsample").get<std::size_t>() != kDownsample) {
            throw std::runtime_error("load_checkpoint: unsupported downsample ratio");
        }
        out.meta.step = doc.at("step").get<std::uint64_t>();
        out.meta.config_hash = doc.at("config_hash").get<std::string>();
        out.meta.parent_digest = doc.value("parent_digest", "");
        out.model = init_model(c, 0);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_checkpoint: " + meta_path.string() + ": " + e.what());
    }
    ModelState& m = out.model;
    auto read = [&](const std::string& name) { return read_tensor(dir / (name + ".gt")); };
    for (auto& p : m.params) {
        const StoredTensor t = read(p.name);
        if (t.shape != p.value.shape()) {
            throw std::runtime_error("load_checkpoint: " + p.name + " has shape " +
                                     shape_to_string(t.shape) + ", expected " +
                                     shape_to_string(p.value.shape()));
        }
        p.value = from_stored(t);
        p.value.set_requires_grad(true);
    }
    m.bank.vectors = from_stored(read("prototypes.vectors"));
    m.bank.history = from_stored(read("prototypes.history"));
    m.bank.fresh = flags_from(read("prototypes.fresh"));
    m.bank.available = flags_from(read("prototypes.available"));
    if (std::filesystem::exists(dir / "gamma.gt")) m.gamma = read("gamma").values.at(0);
    if (std::filesystem::exists(dir / "class_gamma.gt")) m.class_gamma = read("class_gamma").values;
    return out;
}

std::string checkpoint_digest(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : files) {
        const std::string name = p.filename().string();
        h = fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}, h);
        const auto bytes = read_file_bytes(p);
        h = fnv1a64(bytes, h);
    }
    return hex64(h);
}

}  // namespace gssl
