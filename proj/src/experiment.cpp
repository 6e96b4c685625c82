// SPDX-License-Identifier: Apache-2.0
#include "triadapt/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

using Reader = std::function<void(ExperimentConfig&, const YAML::Node&, const std::string&)>;
using Writer = std::function<std::string(const ExperimentConfig&)>;

struct Field {
    std::string key;
    Reader read;
    Writer write;
};

struct Section {
    std::string name;
    std::vector<Field> fields;
};

template <typename T>
T scalar(const YAML::Node& node, const std::string& path, std::string_view type) {
    if (!node.IsScalar()) throw SchemaError(path, fmt::format("{}: expected {}", path, type));
    try {
        return node.as<T>();
    } catch (const YAML::BadConversion&) {
        throw SchemaError(path, fmt::format("{}: expected {}, got '{}'", path, type, node.Scalar()));
    }
}

template <typename Parse>
auto enumerated(const YAML::Node& node, const std::string& path, Parse parse) {
    const auto text = scalar<std::string>(node, path, "string");
    try {
        return parse(text);
    } catch (const ConfigError& e) {
        throw SchemaError(path, fmt::format("{}: {}", path, e.what()));
    }
}

std::uint64_t seed_value(const YAML::Node& node, const std::string& path) {
    const auto text = scalar<std::string>(node, path, "non-negative integer");
    if (!text.empty() && text.front() == '-') {
        throw SchemaError(path, fmt::format("{}: seeds must be non-negative, got {}", path, text));
    }
    return scalar<std::uint64_t>(node, path, "non-negative integer");
}

// Members of ExperimentConfig reached through a projection, so a single
// template covers every numeric or bool field.
template <typename T, typename Proj>
Field number(std::string key, Proj proj) {
    return {key,
            [proj](ExperimentConfig& c, const YAML::Node& n, const std::string& path) {
                proj(c) = scalar<T>(n, path, std::is_same_v<T, bool>             ? "boolean"
                                             : std::is_floating_point_v<T> ? "number"
                                                                           : "integer");
            },
            [proj](ExperimentConfig c) {
                const auto& v = proj(c);
                if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
                else return fmt::format("{}", v);
            }};
}

template <typename Proj, typename Parse, typename Name>
Field choice(std::string key, Proj proj, Parse parse, Name name) {
    return {key,
            [proj, parse](ExperimentConfig& c, const YAML::Node& n, const std::string& path) {
                proj(c) = enumerated(n, path, parse);
            },
            [proj, name](ExperimentConfig c) { return std::string(name(proj(c))); }};
}

std::string quoted(const std::string& s) {
    YAML::Emitter out;
    out << YAML::DoubleQuoted << s;
    return out.c_str();
}

const std::vector<Section>& schema() {
    using C = ExperimentConfig;
    static const std::vector<Section> sections = {
        {"run",
         {
             {"seeds",
              [](C& c, const YAML::Node& n, const std::string& path) {
                  if (!n.IsSequence()) throw SchemaError(path, fmt::format("{}: expected a list of seeds", path));
                  c.seeds.clear();
                  for (std::size_t i = 0; i < n.size(); ++i) {
                      c.seeds.push_back(seed_value(n[i], fmt::format("{}[{}]", path, i)));
                  }
              },
              [](const C& c) { return fmt::format("[{}]", fmt::join(c.seeds, ", ")); }},
             {"output_dir",
              [](C& c, const YAML::Node& n, const std::string& path) {
                  c.output_dir = scalar<std::string>(n, path, "string");
              },
              [](const C& c) { return quoted(c.output_dir); }},
         }},
        {"model",
         {
             choice("topology", [](C& c) -> auto& { return c.model.topology; }, parse_topology, topology_name),
             number<int>("dim", [](C& c) -> auto& { return c.model.dim; }),
             number<int>("layers", [](C& c) -> auto& { return c.model.layers; }),
             choice("activation", [](C& c) -> auto& { return c.model.activation; }, parse_activation,
                    activation_name),
             number<double>("base_std", [](C& c) -> auto& { return c.model.base_std; }),
         }},
        {"task",
         {
             choice("kind", [](C& c) -> auto& { return c.task.kind; }, parse_task_kind, task_kind_name),
             number<int>("train_samples", [](C& c) -> auto& { return c.task.train_samples; }),
             number<int>("eval_samples", [](C& c) -> auto& { return c.task.eval_samples; }),
             number<int>("tokens", [](C& c) -> auto& { return c.task.tokens; }),
             number<double>("noise_std", [](C& c) -> auto& { return c.task.noise_std; }),
             number<int>("planted_rank", [](C& c) -> auto& { return c.task.planted_rank; }),
             number<int>("planted_sites", [](C& c) -> auto& { return c.task.planted_sites; }),
             number<double>("planted_scale", [](C& c) -> auto& { return c.task.planted_scale; }),
         }},
        {"adapter",
         {
             choice("method", [](C& c) -> auto& { return c.train.method; }, parse_method, method_name),
             number<double>("alpha", [](C& c) -> auto& { return c.train.alpha; }),
             number<double>("epsilon", [](C& c) -> auto& { return c.train.epsilon; }),
             number<double>("init_std", [](C& c) -> auto& { return c.train.init_std; }),
             choice("init_policy", [](C& c) -> auto& { return c.train.init_policy; }, parse_init_policy,
                    init_policy_name),
             number<int>("lora_rank", [](C& c) -> auto& { return c.train.lora_rank; }),
             number<double>("dropout", [](C& c) -> auto& { return c.train.adapter_dropout; }),
         }},
        {"schedule",
         {
             choice("mode", [](C& c) -> auto& { return c.train.schedule.mode; }, parse_threshold_mode, mode_name),
             number<long>("warmup_steps", [](C& c) -> auto& { return c.train.schedule.warmup_steps; }),
             number<long>("total_steps", [](C& c) -> auto& { return c.train.schedule.total_steps; }),
             number<long>("incre_interval", [](C& c) -> auto& { return c.train.schedule.incre_interval; }),
             number<int>("incre_rank", [](C& c) -> auto& { return c.train.incre_rank; }),
             number<int>("reference_rank", [](C& c) -> auto& { return c.train.reference_rank; }),
             number<int>("k_fixed", [](C& c) -> auto& { return c.train.schedule.k_fixed; }),
             choice("norm_variant", [](C& c) -> auto& { return c.train.norm_variant; }, parse_norm_variant,
                    variant_name),
         }},
        {"train",
         {
             choice("optimizer", [](C& c) -> auto& { return c.train.optimizer; }, parse_optimizer, optimizer_name),
             number<double>("learning_rate", [](C& c) -> auto& { return c.train.learning_rate; }),
             number<double>("weight_decay", [](C& c) -> auto& { return c.train.weight_decay; }),
             number<double>("beta1", [](C& c) -> auto& { return c.train.beta1; }),
             number<double>("beta2", [](C& c) -> auto& { return c.train.beta2; }),
             number<double>("adam_epsilon", [](C& c) -> auto& { return c.train.adam_epsilon; }),
             number<int>("batch_size", [](C& c) -> auto& { return c.train.batch_size; }),
             number<double>("orth_coefficient", [](C& c) -> auto& { return c.train.orth_coefficient; }),
             number<bool>("orth_enabled", [](C& c) -> auto& { return c.train.orth_enabled; }),
         }},
    };
    return sections;
}

std::string key_text(const YAML::Node& key) {
    return key.IsScalar() ? key.Scalar() : std::string("<non-scalar key>");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw SchemaError("run.seeds", "run.seeds: at least one seed is required");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw SchemaError("run.seeds", "run.seeds: duplicate seed");
    if (output_dir.empty()) throw SchemaError("run.output_dir", "run.output_dir: must not be empty");
    model.validate();
    task.validate();
    train.validate();
    if (task.planted_rank > model.dim) {
        throw SchemaError("task.planted_rank",
                          fmt::format("task.planted_rank: {} exceeds model.dim {}", task.planted_rank, model.dim));
    }
}

ExperimentConfig parse_config(std::string_view yaml) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::Exception& e) {
        throw SchemaError("", fmt::format("config is not valid YAML: {}", e.what()));
    }
    ExperimentConfig config;
    if (root.IsNull()) {
        config.validate();
        return config;
    }
    // The training seed is never a file field; it follows the first listed seed.
    if (!root.IsMap()) throw SchemaError("", "config must be a mapping of sections");

    for (const auto& entry : root) {
        const std::string name = key_text(entry.first);
        const auto& sections = schema();
        const auto section = std::find_if(sections.begin(), sections.end(),
                                          [&](const Section& s) { return s.name == name; });
        if (section == sections.end()) throw SchemaError(name, fmt::format("unknown section '{}'", name));
        const YAML::Node& body = entry.second;
        if (body.IsNull()) continue;
        if (!body.IsMap()) throw SchemaError(name, fmt::format("{}: expected a mapping", name));
        for (const auto& item : body) {
            const std::string key = key_text(item.first);
            const std::string path = name + "." + key;
            const auto field = std::find_if(section->fields.begin(), section->fields.end(),
                                            [&](const Field& f) { return f.key == key; });
            if (field == section->fields.end()) throw SchemaError(path, fmt::format("unknown key '{}'", path));
            field->read(config, item.second, path);
        }
    }
    if (!config.seeds.empty()) config.train.seed = config.seeds.front();
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot read config {}", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string emit_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& section : schema()) {
        out += section.name + ":\n";
        for (const auto& field : section.fields) {
            out += fmt::format("  {}: {}\n", field.key, field.write(config));
        }
    }
    return out;
}

ExperimentConfig single_seed(const ExperimentConfig& config, std::uint64_t seed) {
    ExperimentConfig one = config;
    one.seeds = {seed};
    one.train.seed = seed;
    return one;
}

std::string run_id(const ExperimentConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : emit_config(config)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace triadapt
