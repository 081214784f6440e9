#include "gssl/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gssl {

namespace {

using json = nlohmann::json;

json domain_to_json(const DomainEntry& d) {
    return {{"name", d.name},       {"shift", d.style.shift}, {"texture", d.style.texture},
            {"noise", d.style.noise}, {"jitter", d.style.jitter}, {"include_ood", d.include_ood}};
}

json to_document(const ExperimentConfig& c) {
    json domains = json::array();
    for (const auto& d : c.data.domains) domains.push_back(domain_to_json(d));
    const auto& m = c.model;
    const auto& a = c.augment;
    const auto& t = c.train;
    const auto& e = c.eval;
    return {
        {"data",
         {{"root", c.data.root},
          {"extent", c.data.extent},
          {"n_train", c.data.n_train},
          {"n_test", c.data.n_test},
          {"seed", c.data.seed},
          {"source", c.data.source},
          {"domains", domains}}},
        {"model",
         {{"in_channels", m.in_channels},
          {"encoder_width1", m.encoder_width1},
          {"encoder_width2", m.encoder_width2},
          {"feature_dim", m.feature_dim},
          {"projection_hidden", m.projection_hidden},
          {"num_classes", m.num_classes},
          {"tau", m.tau},
          {"head_tau", m.head_tau}}},
        {"augment",
         {{"global_scale_min", a.global_scale_min},
          {"global_scale_max", a.global_scale_max},
          {"local_scale_min", a.local_scale_min},
          {"local_scale_max", a.local_scale_max},
          {"aspect_min", a.aspect_min},
          {"aspect_max", a.aspect_max},
          {"color_min", a.color_min},
          {"color_max", a.color_max},
          {"hue_max", a.hue_max},
          {"color", a.color},
          {"min_extent", a.min_extent}}},
        {"train",
         {{"seed", t.seed},
          {"steps_pretrain", t.steps_pretrain},
          {"steps_ssl", t.steps_ssl},
          {"batch_source", t.batch_source},
          {"batch_target", t.batch_target},
          {"prototype_batch", t.prototype_batch},
          {"learning_rate", t.learning_rate},
          {"ssl_learning_rate", t.ssl_learning_rate},
          {"momentum", t.momentum},
          {"grad_clip", t.grad_clip},
          {"weights",
           {{"consistency", t.weights.consistency},
            {"uniformity", t.weights.uniformity},
            {"prototype", t.weights.prototype},
            {"supervised", t.weights.supervised}}},
          {"pretrain_uniformity", t.pretrain_uniformity},
          {"ablation", std::string(ablation_name(t.ablation))},
          {"curriculum", t.curriculum},
          {"dropout_p", t.dropout_p},
          {"checkpoint_interval", t.checkpoint_interval}}},
        {"eval",
         {{"beta", e.beta},
          {"test_domain", e.test_domain},
          {"cross_domain_from", e.cross_domain_from},
          {"validation_sizes", e.validation_sizes},
          {"trials", e.trials},
          {"batch", e.batch}}},
    };
}

// Layers `patch` over `base`; objects merge key by key, everything else replaces.
void merge_into(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string child = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError(child + ": unknown key");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_into(slot, it.value(), child);
        } else {
            slot = it.value();
        }
    }
}

template <typename T>
T field(const json& obj, const std::string& path, const char* key) {
    const std::string where = path + "." + key;
    if (!obj.contains(key)) throw ConfigError(where + ": missing");
    const json& v = obj.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where + ": expected a string");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where + ": expected a number");
        }
        return v.get<T>();
    } catch (const json::exception& ex) {
        throw ConfigError(where + ": " + ex.what());
    }
}

void require(bool ok, const std::string& where, const std::string& what) {
    if (!ok) throw ConfigError(where + ": " + what);
}

ExperimentConfig from_document(const json& doc) {
    ExperimentConfig c;
    const json& d = doc.at("data");
    c.data.root = field<std::string>(d, "data", "root");
    c.data.extent = field<std::size_t>(d, "data", "extent");
    c.data.n_train = field<std::size_t>(d, "data", "n_train");
    c.data.n_test = field<std::size_t>(d, "data", "n_test");
    c.data.seed = field<std::uint64_t>(d, "data", "seed");
    c.data.source = field<std::string>(d, "data", "source");
    require(d.at("domains").is_array(), "data.domains", "expected an array");
    for (std::size_t i = 0; i < d.at("domains").size(); ++i) {
        const json& item = d.at("domains")[i];
        const std::string where = "data.domains[" + std::to_string(i) + "]";
        require(item.is_object(), where, "expected an object");
        static const char* keys[] = {"name", "shift", "texture", "noise", "jitter", "include_ood"};
        for (auto it = item.begin(); it != item.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            require(known, where + "." + it.key(), "unknown key");
        }
        DomainEntry entry;
        entry.name = field<std::string>(item, where, "name");
        if (item.contains("shift")) entry.style.shift = field<double>(item, where, "shift");
        if (item.contains("texture")) entry.style.texture = field<double>(item, where, "texture");
        if (item.contains("noise")) entry.style.noise = field<double>(item, where, "noise");
        if (item.contains("jitter")) entry.style.jitter = field<double>(item, where, "jitter");
        if (item.contains("include_ood")) entry.include_ood = field<bool>(item, where, "include_ood");
        c.data.domains.push_back(entry);
    }

    const json& m = doc.at("model");
    c.model.in_channels = field<std::size_t>(m, "model", "in_channels");
    c.model.encoder_width1 = field<std::size_t>(m, "model", "encoder_width1");
    c.model.encoder_width2 = field<std::size_t>(m, "model", "encoder_width2");
    c.model.feature_dim = field<std::size_t>(m, "model", "feature_dim");
    c.model.projection_hidden = field<std::size_t>(m, "model", "projection_hidden");
    c.model.num_classes = field<std::size_t>(m, "model", "num_classes");
    c.model.tau = field<double>(m, "model", "tau");
    c.model.head_tau = field<double>(m, "model", "head_tau");

    const json& a = doc.at("augment");
    c.augment.global_scale_min = field<double>(a, "augment", "global_scale_min");
    c.augment.global_scale_max = field<double>(a, "augment", "global_scale_max");
    c.augment.local_scale_min = field<double>(a, "augment", "local_scale_min");
    c.augment.local_scale_max = field<double>(a, "augment", "local_scale_max");
    c.augment.aspect_min = field<double>(a, "augment", "aspect_min");
    c.augment.aspect_max = field<double>(a, "augment", "aspect_max");
    c.augment.color_min = field<double>(a, "augment", "color_min");
    c.augment.color_max = field<double>(a, "augment", "color_max");
    c.augment.hue_max = field<double>(a, "augment", "hue_max");
    c.augment.color = field<bool>(a, "augment", "color");
    c.augment.min_extent = field<std::size_t>(a, "augment", "min_extent");

    const json& t = doc.at("train");
    c.train.seed = field<std::uint64_t>(t, "train", "seed");
    c.train.steps_pretrain = field<std::size_t>(t, "train", "steps_pretrain");
    c.train.steps_ssl = field<std::size_t>(t, "train", "steps_ssl");
    c.train.batch_source = field<std::size_t>(t, "train", "batch_source");
    c.train.batch_target = field<std::size_t>(t, "train", "batch_target");
    c.train.prototype_batch = field<std::size_t>(t, "train", "prototype_batch");
    c.train.learning_rate = field<double>(t, "train", "learning_rate");
    c.train.ssl_learning_rate = field<double>(t, "train", "ssl_learning_rate");
    c.train.momentum = field<double>(t, "train", "momentum");
    c.train.grad_clip = field<double>(t, "train", "grad_clip");
    const json& w = t.at("weights");
    c.train.weights.consistency = field<double>(w, "train.weights", "consistency");
    c.train.weights.uniformity = field<double>(w, "train.weights", "uniformity");
    c.train.weights.prototype = field<double>(w, "train.weights", "prototype");
    c.train.weights.supervised = field<double>(w, "train.weights", "supervised");
    c.train.pretrain_uniformity = field<double>(t, "train", "pretrain_uniformity");
    try {
        c.train.ablation = parse_ablation(field<std::string>(t, "train", "ablation"));
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("train.ablation: ") + ex.what());
    }
    require(t.at("curriculum").is_array(), "train.curriculum", "expected an array of domain names");
    for (std::size_t i = 0; i < t.at("curriculum").size(); ++i) {
        const json& v = t.at("curriculum")[i];
        require(v.is_string(), "train.curriculum[" + std::to_string(i) + "]", "expected a string");
        c.train.curriculum.push_back(v.get<std::string>());
    }
    c.train.dropout_p = field<double>(t, "train", "dropout_p");
    c.train.checkpoint_interval = field<std::size_t>(t, "train", "checkpoint_interval");

    const json& e = doc.at("eval");
    c.eval.beta = field<double>(e, "eval", "beta");
    c.eval.test_domain = field<std::string>(e, "eval", "test_domain");
    c.eval.cross_domain_from = field<std::string>(e, "eval", "cross_domain_from");
    require(e.at("validation_sizes").is_array(), "eval.validation_sizes", "expected an array");
    c.eval.validation_sizes.clear();
    for (std::size_t i = 0; i < e.at("validation_sizes").size(); ++i) {
        const json& v = e.at("validation_sizes")[i];
        require(v.is_number_unsigned(), "eval.validation_sizes[" + std::to_string(i) + "]",
                "expected a non-negative integer");
        c.eval.validation_sizes.push_back(v.get<std::size_t>());
    }
    c.eval.trials = field<std::size_t>(e, "eval", "trials");
    c.eval.batch = field<std::size_t>(e, "eval", "batch");
    return c;
}

void validate(const ExperimentConfig& c) {
    auto has_domain = [&](const std::string& name) {
        for (const auto& d : c.data.domains) {
            if (d.name == name) return true;
        }
        return false;
    };
    require(c.data.extent >= 16 && c.data.extent % kDownsample == 0, "data.extent",
            "must be >= 16 and divisible by 4");
    require(c.data.n_train > 0 && c.data.n_test > 0, "data.n_train", "dataset sizes must be positive");
    require(!c.data.domains.empty(), "data.domains", "at least one domain is required");
    require(has_domain(c.data.source), "data.source", "unknown domain '" + c.data.source + "'");
    for (std::size_t i = 0; i < c.train.curriculum.size(); ++i) {
        require(has_domain(c.train.curriculum[i]), "train.curriculum[" + std::to_string(i) + "]",
                "unknown domain '" + c.train.curriculum[i] + "'");
    }
    require(has_domain(c.eval.test_domain), "eval.test_domain", "unknown domain '" + c.eval.test_domain + "'");
    require(has_domain(c.eval.cross_domain_from), "eval.cross_domain_from",
            "unknown domain '" + c.eval.cross_domain_from + "'");
    require(c.model.num_classes == 4, "model.num_classes", "the synthetic benchmark has 4 known classes");
    require(c.model.in_channels == 3, "model.in_channels", "images have 3 channels");
    require(c.model.tau > 0.0, "model.tau", "must be > 0");
    require(c.model.head_tau > 0.0, "model.head_tau", "must be > 0");
    require(c.model.feature_dim > 0 && c.model.projection_hidden > 0 && c.model.encoder_width1 > 0 &&
                c.model.encoder_width2 > 0,
            "model", "layer widths must be positive");
    require(c.train.batch_source > 0, "train.batch_source", "must be positive");
    require(c.train.batch_target > 0, "train.batch_target", "must be positive");
    require(c.train.prototype_batch > 0, "train.prototype_batch", "must be positive");
    require(c.train.learning_rate >= 0.0, "train.learning_rate", "must be >= 0");
    require(c.train.ssl_learning_rate >= 0.0, "train.ssl_learning_rate", "must be >= 0");
    for (const auto& [name, value] : {std::pair{"consistency", c.train.weights.consistency},
                                      std::pair{"uniformity", c.train.weights.uniformity},
                                      std::pair{"prototype", c.train.weights.prototype},
                                      std::pair{"supervised", c.train.weights.supervised}}) {
        require(value >= 0.0, std::string("train.weights.") + name, "must be >= 0");
    }
    require(c.train.pretrain_uniformity >= 0.0, "train.pretrain_uniformity", "must be >= 0");
    require(c.train.grad_clip >= 0.0, "train.grad_clip", "must be >= 0");
    require(c.train.momentum >= 0.0 && c.train.momentum < 1.0, "train.momentum", "must be in [0,1)");
    require(c.train.dropout_p >= 0.0 && c.train.dropout_p < 1.0, "train.dropout_p", "must be in [0,1)");
    require(c.eval.beta > 0.0, "eval.beta", "must be > 0");
    require(c.eval.batch > 0, "eval.batch", "must be positive");
}

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

}  // namespace

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.model.encoder_width1 = 16;
    c.model.encoder_width2 = 32;
    c.model.feature_dim = 32;
    c.model.projection_hidden = 32;
    c.data.domains = {
        {"A", {0.0, 0.05, 0.03, 0.04}, false},
        {"B", {0.5, 0.08, 0.04, 0.05}, false},
        {"C", {1.0, 0.12, 0.05, 0.06}, true},
    };
    c.data.n_test = 32;
    c.train.curriculum = {"B", "C"};
    // Tuned on the synthetic benchmark. Uniformity during pretraining and a
    // unit uniformity weight both pulled target accuracy down.
    c.train.steps_pretrain = 600;
    c.train.steps_ssl = 300;
    c.train.batch_target = 8;
    c.train.learning_rate = 0.01;
    c.train.ssl_learning_rate = 0.003;
    c.train.grad_clip = 2.0;
    c.train.pretrain_uniformity = 0.0;
    c.train.weights.uniformity = 0.1;
    return c;
}

ExperimentConfig parse_config(const std::string& json_text, std::span<const std::string> overrides) {
    json doc = to_document(default_config());
    if (!json_text.empty()) {
        json user;
        try {
            user = json::parse(json_text);
        } catch (const json::exception& ex) {
            throw ConfigError(std::string("<document>: ") + ex.what());
        }
        merge_into(doc, user, "");
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(o + ": override must be key.path=value");
        }
        const std::string path = o.substr(0, eq);
        json* node = &doc;
        std::string walked;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            walked += (walked.empty() ? "" : ".") + key;
            if (!node->is_object() || !node->contains(key)) throw ConfigError(walked + ": unknown key");
            node = &(*node)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        *node = parse_override_value(o.substr(eq + 1));
    }
    ExperimentConfig c = from_document(doc);
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path.string() + ": cannot open config");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string config_to_json(const ExperimentConfig& cfg) { return to_document(cfg).dump(2) + "\n"; }

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string text = to_document(cfg).dump();
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace gssl
