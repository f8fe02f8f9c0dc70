#include "expertnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "expertnet/seeds.hpp"

namespace expertnet {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct KeyValue {
    std::string section;
    std::string key;
    std::string value;
    int line;
};

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

long long parse_int(const KeyValue& kv, const std::string& origin) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(origin, kv.line, "key '" + kv.section + "." + kv.key + "' expects an integer, got '" +
                                  kv.value + "'");
    }
}

std::uint64_t parse_u64(const KeyValue& kv, const std::string& origin) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(origin, kv.line, "key '" + kv.section + "." + kv.key +
                                  "' expects an unsigned integer, got '" + kv.value + "'");
    }
}

double parse_double(const KeyValue& kv, const std::string& origin) {
    try {
        std::size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(origin, kv.line,
             "key '" + kv.section + "." + kv.key + "' expects a number, got '" + kv.value + "'");
    }
}

bool parse_on_off(const KeyValue& kv, const std::string& origin) {
    if (kv.value == "on" || kv.value == "true" || kv.value == "1") return true;
    if (kv.value == "off" || kv.value == "false" || kv.value == "0") return false;
    fail(origin, kv.line,
         "key '" + kv.section + "." + kv.key + "' expects on/off, got '" + kv.value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
    parts.erase(std::remove(parts.begin(), parts.end(), std::string{}), parts.end());
    return parts;
}

void apply_train_key(TrainConfig& cfg, const KeyValue& kv, const std::string& origin,
                     bool& explicit_seed) {
    if (kv.key == "epochs")
        cfg.epochs = static_cast<int>(parse_int(kv, origin));
    else if (kv.key == "learning_rate")
        cfg.learning_rate = parse_double(kv, origin);
    else if (kv.key == "momentum")
        cfg.momentum = parse_double(kv, origin);
    else if (kv.key == "weight_decay")
        cfg.weight_decay = parse_double(kv, origin);
    else if (kv.key == "batch_size")
        cfg.batch_size = static_cast<int>(parse_int(kv, origin));
    else if (kv.key == "seed") {
        cfg.seed = parse_u64(kv, origin);
        explicit_seed = true;
    } else
        fail(origin, kv.line, "unknown key '" + kv.section + "." + kv.key + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    std::vector<KeyValue> entries;
    {
        std::istringstream in(text);
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']') fail(origin, line_no, "malformed section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            std::size_t eq = t.find('=');
            if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value'");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (section.empty()) fail(origin, line_no, "key outside any [section]");
            if (key.empty()) fail(origin, line_no, "empty key");
            entries.push_back({section, key, value, line_no});
        }
    }

    RunConfig cfg;
    bool have_n = false, have_d = false, have_head = false, have_m = false, have_s = false;
    for (const auto& kv : entries) {
        if (kv.section == "dataset") {
            if (kv.key == "num_classes") {
                cfg.gen.num_classes = static_cast<int>(parse_int(kv, origin));
                have_n = true;
            } else if (kv.key == "feature_dim") {
                cfg.gen.feature_dim = static_cast<int>(parse_int(kv, origin));
                have_d = true;
            } else if (kv.key == "head_count") {
                cfg.gen.head_count = static_cast<int>(parse_int(kv, origin));
                have_head = true;
            }
            else if (kv.key == "imbalance_ratio")
                cfg.gen.imbalance_ratio = parse_double(kv, origin);
            else if (kv.key == "test_per_class")
                cfg.gen.test_per_class = static_cast<int>(parse_int(kv, origin));
            else if (kv.key == "seed") {
                cfg.gen.seed = parse_u64(kv, origin);
                cfg.explicit_gen_seed = true;
            } else if (kv.key == "overlap") {
                for (const auto& part : split_list(kv.value)) {
                    OverlapEntry e;
                    if (std::sscanf(part.c_str(), "%d:%d:%lf", &e.a, &e.b, &e.strength) != 3)
                        fail(origin, kv.line,
                             "overlap entries use 'a:b:strength', got '" + part + "'");
                    cfg.gen.confusable_plan.push_back(e);
                }
            } else
                fail(origin, kv.line, "unknown key 'dataset." + kv.key + "'");
        } else if (kv.section == "pipeline") {
            if (kv.key == "M") {
                cfg.pipe.num_blocks = static_cast<int>(parse_int(kv, origin));
                have_m = true;
            } else if (kv.key == "S") {
                cfg.pipe.selection_width = static_cast<int>(parse_int(kv, origin));
                have_s = true;
            }
            else if (kv.key == "trunk_feature_dim")
                cfg.pipe.trunk_feature_dim = static_cast<int>(parse_int(kv, origin));
            else if (kv.key == "hidden")
                cfg.pipe.hidden = static_cast<int>(parse_int(kv, origin));
            else if (kv.key == "fine_tune")
                cfg.pipe.fine_tune = parse_on_off(kv, origin);
            else if (kv.key == "cgc")
                cfg.pipe.cgc = parse_on_off(kv, origin);
            else if (kv.key == "division") {
                if (kv.value == "gcs")
                    cfg.pipe.division = DivisionMode::gcs;
                else if (kv.value == "random")
                    cfg.pipe.division = DivisionMode::random_division;
                else
                    fail(origin, kv.line, "division must be gcs or random");
            } else if (kv.key == "balance") {
                if (kv.value == "class")
                    cfg.pipe.balance = BalanceMode::class_count;
                else if (kv.value == "sample")
                    cfg.pipe.balance = BalanceMode::sample_count;
                else
                    fail(origin, kv.line, "balance must be class or sample");
            } else if (kv.key == "tau")
                cfg.pipe.tau = parse_double(kv, origin);
            else
                fail(origin, kv.line, "unknown key 'pipeline." + kv.key + "'");
        } else if (kv.section == "baseline") {
            apply_train_key(cfg.pipe.baseline_cfg, kv, origin, cfg.explicit_baseline_seed);
        } else if (kv.section == "expert") {
            apply_train_key(cfg.pipe.expert_cfg, kv, origin, cfg.explicit_expert_seed);
        } else if (kv.section == "fam") {
            apply_train_key(cfg.pipe.fam_cfg, kv, origin, cfg.explicit_fam_seed);
        } else if (kv.section == "head") {
            apply_train_key(cfg.pipe.head_cfg, kv, origin, cfg.explicit_head_seed);
        } else if (kv.section == "run") {
            if (kv.key == "seed")
                cfg.master_seed = parse_u64(kv, origin);
            else if (kv.key == "out")
                cfg.out_dir = kv.value;
            else if (kv.key == "train") {
                cfg.train_path = kv.value;
                cfg.explicit_train_path = true;
            } else if (kv.key == "test") {
                cfg.test_path = kv.value;
                cfg.explicit_test_path = true;
            }
            else if (kv.key == "pair_errors")
                cfg.eval_pair_errors = parse_on_off(kv, origin);
            else
                fail(origin, kv.line, "unknown key 'run." + kv.key + "'");
        } else if (kv.section == "ablate") {
            auto parse_int_list = [&](std::vector<int>& out) {
                out.clear();
                for (const auto& part : split_list(kv.value)) {
                    KeyValue item = kv;
                    item.value = part;
                    out.push_back(static_cast<int>(parse_int(item, origin)));
                }
            };
            if (kv.key == "M_values")
                parse_int_list(cfg.ablate_m);
            else if (kv.key == "S_values")
                parse_int_list(cfg.ablate_s);
            else if (kv.key == "seeds") {
                cfg.ablate_seeds.clear();
                for (const auto& part : split_list(kv.value)) {
                    KeyValue item = kv;
                    item.value = part;
                    cfg.ablate_seeds.push_back(parse_u64(item, origin));
                }
            } else
                fail(origin, kv.line, "unknown key 'ablate." + kv.key + "'");
        } else {
            fail(origin, kv.line, "unknown section '" + kv.section + "'");
        }
    }

    std::string missing;
    auto require = [&](bool have, const char* name) {
        if (!have) missing += missing.empty() ? name : (std::string(", ") + name);
    };
    require(have_n, "dataset.num_classes");
    require(have_d, "dataset.feature_dim");
    require(have_head, "dataset.head_count");
    require(have_m, "pipeline.M");
    require(have_s, "pipeline.S");
    if (!missing.empty())
        throw std::runtime_error(origin + ": missing required key(s): " + missing);

    finalize_seeds_and_paths(cfg);
    validate(cfg.gen);
    validate(cfg.pipe);
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

void finalize_seeds_and_paths(RunConfig& cfg) {
    cfg.pipe.seed = cfg.master_seed;
    if (!cfg.explicit_gen_seed) cfg.gen.seed = mix_seed(cfg.master_seed, 1);
    if (!cfg.explicit_baseline_seed) cfg.pipe.baseline_cfg.seed = mix_seed(cfg.master_seed, 2);
    if (!cfg.explicit_expert_seed) cfg.pipe.expert_cfg.seed = mix_seed(cfg.master_seed, 3);
    if (!cfg.explicit_fam_seed) cfg.pipe.fam_cfg.seed = mix_seed(cfg.master_seed, 4);
    if (!cfg.explicit_head_seed) cfg.pipe.head_cfg.seed = mix_seed(cfg.master_seed, 5);
    if (!cfg.explicit_train_path) cfg.train_path = cfg.out_dir + "/train.txt";
    if (!cfg.explicit_test_path) cfg.test_path = cfg.out_dir + "/test.txt";
}

std::string canonical_echo(const RunConfig& cfg) {
    std::ostringstream out;
    char num[64];
    auto put_double = [&](const char* key, double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        out << key << ' ' << num << '\n';
    };
    out << "dataset.num_classes " << cfg.gen.num_classes << '\n';
    out << "dataset.feature_dim " << cfg.gen.feature_dim << '\n';
    out << "dataset.head_count " << cfg.gen.head_count << '\n';
    put_double("dataset.imbalance_ratio", cfg.gen.imbalance_ratio);
    out << "dataset.test_per_class " << cfg.gen.test_per_class << '\n';
    out << "dataset.seed " << cfg.gen.seed << '\n';
    for (const auto& e : cfg.gen.confusable_plan) {
        std::snprintf(num, sizeof(num), "%.17g", e.strength);
        out << "dataset.overlap " << e.a << ':' << e.b << ':' << num << '\n';
    }
    out << "pipeline.M " << cfg.pipe.num_blocks << '\n';
    out << "pipeline.S " << cfg.pipe.selection_width << '\n';
    out << "pipeline.trunk_feature_dim " << cfg.pipe.trunk_feature_dim << '\n';
    out << "pipeline.hidden " << cfg.pipe.hidden << '\n';
    out << "pipeline.fine_tune " << (cfg.pipe.fine_tune ? "on" : "off") << '\n';
    out << "pipeline.cgc " << (cfg.pipe.cgc ? "on" : "off") << '\n';
    out << "pipeline.division "
        << (cfg.pipe.division == DivisionMode::gcs ? "gcs" : "random") << '\n';
    out << "pipeline.balance "
        << (cfg.pipe.balance == BalanceMode::class_count ? "class" : "sample") << '\n';
    put_double("pipeline.tau", cfg.pipe.tau);
    auto echo_train = [&](const char* name, const TrainConfig& t) {
        out << name << ".epochs " << t.epochs << '\n';
        put_double((std::string(name) + ".learning_rate").c_str(), t.learning_rate);
        put_double((std::string(name) + ".momentum").c_str(), t.momentum);
        put_double((std::string(name) + ".weight_decay").c_str(), t.weight_decay);
        out << name << ".batch_size " << t.batch_size << '\n';
        out << name << ".seed " << t.seed << '\n';
    };
    echo_train("baseline", cfg.pipe.baseline_cfg);
    echo_train("expert", cfg.pipe.expert_cfg);
    echo_train("fam", cfg.pipe.fam_cfg);
    echo_train("head", cfg.pipe.head_cfg);
    out << "run.seed " << cfg.master_seed << '\n';
    out << "run.pair_errors " << (cfg.eval_pair_errors ? "on" : "off") << '\n';
    return out.str();
}

}  // namespace expertnet
