#pragma once
// Declarative experiment configs. Two encodings feed the same normalized
// document: a nested key/value text format (sections in brackets, one
// `key = value` per line) and plain JSON. Normalization fills every default,
// echoes the result, and aggregates all errors instead of stopping at the
// first one.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hjhom/common.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/model.hpp"

namespace hjhom {

using json = nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {"collapse-demo",    "convergence-study",
                                                   "cell-table",       "metric-study",
                                                   "ergodic-variance", "property-suite"};
    return kinds;
}

//============================================================================
// Text encoding
//============================================================================

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = s.find(sep, start);
        out.push_back(s.substr(start, p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

inline bool parse_number(const std::string& tok, double& out) {
    const char* c = tok.c_str();
    char* end = nullptr;
    out = std::strtod(c, &end);
    return end != c && *end == '\0';
}

// scalar token: number, bool, or bare string
inline json parse_token(const std::string& tok) {
    double num;
    if (parse_number(tok, num)) return json(num);
    if (tok == "true") return json(true);
    if (tok == "false") return json(false);
    return json(tok);
}

// value grammar: comma-separated entries form an array; whitespace inside an
// entry forms an inner array (used for vectors such as directions)
inline json parse_value(const std::string& raw) {
    std::vector<std::string> entries = split(raw, ',');
    auto parse_entry = [](const std::string& e) -> json {
        std::istringstream in(trim(e));
        std::vector<std::string> toks;
        std::string t;
        while (in >> t) toks.push_back(t);
        if (toks.empty()) return json();
        if (toks.size() == 1) return parse_token(toks[0]);
        json arr = json::array();
        for (const auto& tok : toks) arr.push_back(parse_token(tok));
        return arr;
    };
    if (entries.size() == 1) return parse_entry(entries[0]);
    json arr = json::array();
    for (const auto& e : entries) arr.push_back(parse_entry(e));
    return arr;
}

}  // namespace detail

// Parses the text encoding. Errors carry the 1-based line number.
inline json parse_config_text(const std::string& text, std::vector<std::string>& errors) {
    json doc = json::object();
    std::vector<std::string> section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back("line " + std::to_string(lineno) + ": unterminated section header");
                continue;
            }
            std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty()) {
                errors.push_back("line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            section = detail::split(name, '.');
            for (auto& part : section) part = detail::trim(part);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected key = value, got '" +
                             line + "'");
            continue;
        }
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            errors.push_back("line " + std::to_string(lineno) + ": empty key");
            continue;
        }
        json* node = &doc;
        bool bad = false;
        for (const auto& part : section) {
            if (node->contains(part) && !(*node)[part].is_object()) {
                errors.push_back("line " + std::to_string(lineno) + ": section '" + part +
                                 "' collides with a plain key");
                bad = true;
                break;
            }
            node = &(*node)[part];
        }
        if (bad) continue;
        (*node)[key] = detail::parse_value(val);
    }
    return doc;
}

// Reads either encoding. JSON is chosen by a .json extension or a leading '{'.
inline json load_config_file(const std::string& path, std::vector<std::string>& errors) {
    std::ifstream in(path);
    if (!in) {
        errors.push_back("cannot open config file: " + path);
        return json::object();
    }
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    std::string trimmed = detail::trim(text);
    bool is_json = trimmed.size() > 0 && trimmed.front() == '{';
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") is_json = true;
    if (is_json) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            errors.push_back(std::string("json parse error: ") + e.what());
            return json::object();
        }
    }
    return parse_config_text(text, errors);
}

//============================================================================
// Normalization
//============================================================================

// Typed cursor over the raw document. Reads record defaults back into the
// normalized echo and type mismatches land in the shared error list.
class ConfigReader {
  public:
    ConfigReader(const json& raw, json& echo, std::vector<std::string>& errors,
                 std::string prefix = "")
        : raw_(raw), echo_(echo), errors_(errors), prefix_(std::move(prefix)) {}

    ConfigReader section(const std::string& name) {
        static const json empty = json::object();
        const json* sub = &empty;
        if (raw_.contains(name)) {
            if (raw_[name].is_object())
                sub = &raw_[name];
            else
                fail(name, "expected a section");
        }
        if (!echo_.contains(name)) echo_[name] = json::object();
        return ConfigReader(*sub, echo_[name], errors_, prefix_ + name + ".");
    }

    bool has(const std::string& key) const { return raw_.contains(key); }

    double number(const std::string& key, double def) {
        if (!raw_.contains(key)) return echo(key, def);
        if (!raw_[key].is_number()) {
            fail(key, "expected a number");
            return echo(key, def);
        }
        return echo(key, raw_[key].get<double>());
    }

    double required_number(const std::string& key) {
        if (!raw_.contains(key)) {
            fail(key, "required key is missing");
            return 0;
        }
        return number(key, 0);
    }

    std::int64_t integer(const std::string& key, std::int64_t def) {
        double v = number(key, static_cast<double>(def));
        auto r = static_cast<std::int64_t>(std::llround(v));
        if (std::abs(v - static_cast<double>(r)) > 1e-9) fail(key, "expected an integer");
        echo_[key] = r;
        return r;
    }

    bool boolean(const std::string& key, bool def) {
        if (!raw_.contains(key)) return echo(key, def);
        if (!raw_[key].is_boolean()) {
            fail(key, "expected true or false");
            return echo(key, def);
        }
        return echo(key, raw_[key].get<bool>());
    }

    std::string text(const std::string& key, const std::string& def) {
        if (!raw_.contains(key)) return echo(key, def);
        if (!raw_[key].is_string()) {
            fail(key, "expected a string");
            return echo(key, def);
        }
        return echo(key, raw_[key].get<std::string>());
    }

    // list of numbers; a lone scalar is promoted to a one-element list
    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!raw_.contains(key)) {
            echo_[key] = def;
            return def;
        }
        std::vector<double> out;
        const json& v = raw_[key];
        if (v.is_number()) {
            out.push_back(v.get<double>());
        } else if (v.is_array()) {
            for (const auto& e : v) {
                if (!e.is_number()) {
                    fail(key, "expected a list of numbers");
                    echo_[key] = def;
                    return def;
                }
                out.push_back(e.get<double>());
            }
        } else {
            fail(key, "expected a list of numbers");
            echo_[key] = def;
            return def;
        }
        echo_[key] = out;
        return out;
    }

    std::vector<double> required_numbers(const std::string& key) {
        if (!raw_.contains(key)) {
            fail(key, "required key is missing");
            return {};
        }
        return numbers(key, {});
    }

    // list of fixed-length vectors, e.g. directions = 1 0, -1 0
    std::vector<std::vector<double>> vectors(const std::string& key, int length,
                                             std::vector<std::vector<double>> def) {
        if (!raw_.contains(key)) {
            echo_[key] = def;
            return def;
        }
        const json& v = raw_[key];
        std::vector<std::vector<double>> out;
        // a flat list of scalars is a list of one-component vectors when
        // length is 1, and a single vector otherwise
        json entries;
        if (v.is_array() && !v.empty() && (v[0].is_array() || length == 1))
            entries = v;
        else
            entries = json::array({v});
        for (const auto& e : entries) {
            std::vector<double> vec;
            if (e.is_number() && length == 1) {
                vec.push_back(e.get<double>());
            } else if (e.is_array() && static_cast<int>(e.size()) == length) {
                for (const auto& c : e) {
                    if (!c.is_number()) {
                        fail(key, "expected numeric vectors");
                        echo_[key] = def;
                        return def;
                    }
                    vec.push_back(c.get<double>());
                }
            } else {
                fail(key, "expected vectors of length " + std::to_string(length));
                echo_[key] = def;
                return def;
            }
            out.push_back(vec);
        }
        echo_[key] = out;
        return out;
    }

    // flags keys present in the raw section but never consumed
    void check_unknown_keys() {
        for (auto it = raw_.begin(); it != raw_.end(); ++it)
            if (!echo_.contains(it.key())) fail(it.key(), "unknown key");
    }

    void fail(const std::string& key, const std::string& msg) {
        errors_.push_back(prefix_ + key + ": " + msg);
    }

  private:
    template <class T>
    T echo(const std::string& key, T v) {
        echo_[key] = v;
        return v;
    }

    const json& raw_;
    json& echo_;
    std::vector<std::string>& errors_;
    std::string prefix_;
};

namespace detail {

inline FieldSpec read_field(ConfigReader sec, std::vector<std::string>& errors,
                            const std::string& where) {
    FieldSpec f;
    std::string kind = sec.text("kind", "constant");
    if (kind == "constant")
        f.kind = FieldKind::constant;
    else if (kind == "periodic-cosine")
        f.kind = FieldKind::periodic_cosine;
    else if (kind == "random-checkerboard")
        f.kind = FieldKind::random_checkerboard;
    else if (kind == "smoothed-bumps")
        f.kind = FieldKind::smoothed_bumps;
    else
        errors.push_back(where +
                         ".kind: unknown field kind '" + kind +
                         "' (constant, periodic-cosine, random-checkerboard, smoothed-bumps)");
    f.mean = sec.number("mean", 0);
    f.amplitude = sec.number("amplitude", 0);
    f.cell = sec.number("cell", 1);
    f.period = sec.number("period", 1);
    f.smoothing_radius = sec.number("smoothing_radius", 1);
    sec.check_unknown_keys();
    return f;
}

inline std::vector<real> read_coeff(ConfigReader& sec, const std::string& key, int m, real def) {
    std::vector<double> v = sec.numbers(key, {static_cast<double>(def)});
    if (static_cast<int>(v.size()) == 1) v.assign(m, v[0]);
    if (static_cast<int>(v.size()) != m)
        sec.fail(key, "needs one entry (broadcast) or one per component");
    v.resize(m, def);
    return std::vector<real>(v.begin(), v.end());
}

}  // namespace detail

inline EnvironmentSpec read_environment(ConfigReader env, std::vector<std::string>& errors) {
    EnvironmentSpec spec;
    spec.dim = static_cast<int>(env.integer("dim", 1));
    spec.components = static_cast<int>(env.integer("components", 1));
    spec.side = env.number("side", 1);
    spec.sigma = detail::read_field(env.section("sigma"), errors, "environment.sigma");
    spec.potential = detail::read_field(env.section("potential"), errors, "environment.potential");
    spec.coupling = spec.components >= 2 ? detail::read_field(env.section("coupling"), errors,
                                                              "environment.coupling")
                                         : constant_field(0);
    if (spec.components < 2) env.section("coupling");  // echo the empty section
    env.check_unknown_keys();
    for (const auto& e : validate(spec)) errors.push_back(e);
    return spec;
}

inline HamiltonianModel read_model(ConfigReader mod, int components,
                                   std::vector<std::string>& errors) {
    HamiltonianModel md;
    std::string kind = mod.text("kind", "quadratic-coupling");
    if (kind == "quadratic-coupling")
        md.kind = ModelKind::quadratic_coupling;
    else if (kind == "exponential-coupling")
        md.kind = ModelKind::exponential_coupling;
    else if (kind == "uncoupled")
        md.kind = ModelKind::uncoupled;
    else
        errors.push_back("model.kind: unknown kind '" + kind +
                         "' (quadratic-coupling, exponential-coupling, uncoupled)");
    int m = components;
    md.gamma = detail::read_coeff(mod, "gamma", m, 2);
    md.a = detail::read_coeff(mod, "a", m, 1);
    md.beta = detail::read_coeff(mod, "beta", m, 0);
    md.coupling_weight = detail::read_coeff(mod, "coupling_weight", m, 1);
    md.potential_weight = detail::read_coeff(mod, "potential_weight", m, -1);
    md.exp_clamp = mod.number("exp_clamp", 30);
    mod.check_unknown_keys();
    for (const auto& e : validate(md, components)) errors.push_back(e);
    if (md.kind == ModelKind::uncoupled && components >= 2)
        errors.push_back(
            "model: the uncoupled kind needs a single component (nothing ties a "
            "multi-component system together without coupling)");
    return md;
}

struct ExperimentConfig {
    std::string kind;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out_dir;
    EnvironmentSpec env;
    HamiltonianModel model;
    json normalized;  // full echo: every default filled in
};

// Normalizes the raw document. Kind-specific sections are checked here for
// presence and type; the harness reads them back from `normalized`.
inline ExperimentConfig normalize_config(const json& raw, std::vector<std::string>& errors);

inline std::string config_digest(const json& normalized) {
    json stripped = normalized;
    // placement and scheduling knobs do not change the data, so they do not
    // change the identity either
    stripped.erase("out");
    stripped.erase("workers");
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(stripped.dump())));
    return buf;
}

namespace detail {

inline void normalize_table_section(ConfigReader& root, int dim,
                                    std::vector<std::string>& errors,
                                    const std::string& name = "table") {
    ConfigReader tab = root.section(name);
    double p1_min = tab.number("p1_min", -2), p1_max = tab.number("p1_max", 2);
    std::int64_t p1_count = tab.integer("p1_count", 17);
    if (!(p1_max > p1_min)) errors.push_back(name + ": p1_max must exceed p1_min");
    if (p1_count < 2) errors.push_back(name + ": p1_count must be at least 2");
    if (dim == 2) {
        double p2_min = tab.number("p2_min", -2), p2_max = tab.number("p2_max", 2);
        if (!(p2_max > p2_min)) errors.push_back(name + ": p2_max must exceed p2_min");
        if (tab.integer("p2_count", 9) < 2)
            errors.push_back(name + ": p2_count must be at least 2");
    } else if (tab.has("p2_count")) {
        errors.push_back(name + ": a p2 axis needs a two-dimensional environment");
    }
    tab.numbers("r", {0.0});
    tab.number("delta0", 0.2);
    tab.integer("halvings", 4);
    tab.number("h", 1.0 / 64);
    tab.number("safety", 0.4);
    tab.number("tol", 1e-8);
    tab.number("flatness_window", 1.0);
    tab.check_unknown_keys();
}

}  // namespace detail

inline ExperimentConfig normalize_config(const json& raw, std::vector<std::string>& errors) {
    ExperimentConfig cfg;
    if (!raw.is_object()) {
        errors.push_back("config root must be a table of keys");
        return cfg;
    }
    cfg.normalized = json::object();
    ConfigReader root(raw, cfg.normalized, errors);

    cfg.kind = root.text("kind", "");
    bool known = false;
    for (const auto& k : experiment_kinds()) known = known || k == cfg.kind;
    if (!known) {
        std::string valid;
        for (const auto& k : experiment_kinds()) valid += (valid.empty() ? "" : ", ") + k;
        errors.push_back(cfg.kind.empty()
                             ? "kind: required key is missing (valid kinds: " + valid + ")"
                             : "kind: unknown experiment kind '" + cfg.kind +
                                   "' (valid kinds: " + valid + ")");
    }
    double seed = root.number("seed", 1);
    if (seed < 0) errors.push_back("seed: must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.workers = static_cast<int>(root.integer("workers", 1));
    if (cfg.workers < 1) errors.push_back("workers: must be at least 1");
    cfg.out_dir = root.text("out", "runs/" + (cfg.kind.empty() ? "run" : cfg.kind));

    cfg.env = read_environment(root.section("environment"), errors);
    cfg.model = read_model(root.section("model"), cfg.env.components, errors);

    if (cfg.kind == "collapse-demo") {
        ConfigReader run = root.section("run");
        run.required_numbers("eps");
        run.number("T", 1);
        run.integer("snapshots", 20);
        run.number("h", 1.0 / 64);
        run.number("extent", 1);
        run.number("safety", 0.1);
        run.number("u_high", 1);
        run.number("u_low", 0);
        run.number("tol", 1e-2);
        run.check_unknown_keys();
        if (cfg.env.components != 2)
            errors.push_back("collapse-demo: needs a two-component environment");
        if (cfg.model.kind != ModelKind::quadratic_coupling)
            errors.push_back("collapse-demo: needs the quadratic coupling kind");
        if (cfg.env.potential.kind != FieldKind::constant ||
            std::abs(cfg.env.potential.mean) > 0 || std::abs(cfg.env.potential.amplitude) > 0)
            errors.push_back("collapse-demo: the closed-form reference needs a zero potential");
        if (cfg.env.sigma.kind != FieldKind::constant || std::abs(cfg.env.sigma.mean) > 0)
            errors.push_back("collapse-demo: the closed-form reference needs zero diffusion");
        if (cfg.env.components >= 2 && (cfg.env.coupling.kind != FieldKind::constant ||
                                        cfg.env.coupling.amplitude != 0))
            errors.push_back("collapse-demo: the closed-form reference needs constant coupling");
        for (real b : cfg.model.beta)
            if (b != 0)
                errors.push_back("collapse-demo: the closed-form reference needs beta = 0");
    } else if (cfg.kind == "convergence-study") {
        ConfigReader run = root.section("run");
        run.required_numbers("eps");
        run.number("T", 1);
        run.number("t0", 0.25);
        run.integer("snapshots", 16);
        run.number("h", 1.0 / 128);
        run.number("extent", 1);
        run.number("safety", 0.1);
        run.number("target_fraction", 0);
        run.number("fit_residual_max", 0.2);
        run.number("delta", 0.05);
        run.integer("table_seed_offset", 1000);
        ConfigReader init = root.section("initial");
        init.numbers("offsets", {0.0});
        init.number("amplitude", 0.5);
        init.integer("modes", 1);
        ConfigReader eff = root.section("effective");
        eff.number("h", 1.0 / 256);
        eff.number("safety", 0.4);
        run.check_unknown_keys();
        detail::normalize_table_section(root, cfg.env.dim, errors);
    } else if (cfg.kind == "cell-table") {
        if (!raw.contains("table") ||
            (raw["table"].is_object() &&
             !(raw["table"].contains("delta0") || raw["table"].contains("halvings"))))
            errors.push_back(
                "cell-table: the table section needs a discount schedule (keys delta0, halvings)");
        detail::normalize_table_section(root, cfg.env.dim, errors);
    } else if (cfg.kind == "metric-study") {
        ConfigReader met = root.section("metric");
        met.required_numbers("mu");
        met.vectors("p", cfg.env.dim, {std::vector<double>(cfg.env.dim, 0.0)});
        met.number("r", 0);
        std::vector<std::vector<double>> defdir;
        defdir.push_back(std::vector<double>{1.0});
        if (cfg.env.dim == 2) defdir[0].push_back(0.0);
        met.vectors("directions", cfg.env.dim, defdir);
        met.numbers("ts", {8.0, 16.0, 32.0});
        met.number("h", 0.125);
        met.number("domain_radius", 0);
        met.number("tol", 1e-7);
        met.number("safety", 0.4);
        met.number("hbar_est", 0);
        met.numbers("seeds", {});
        met.number("consistency_tol", 0.03);
        met.boolean("compare_table", false);
        met.check_unknown_keys();
        if (raw.contains("metric") && raw["metric"].is_object() &&
            raw["metric"].value("compare_table", false))
            detail::normalize_table_section(root, cfg.env.dim, errors);
        else
            root.section("table");
    } else if (cfg.kind == "ergodic-variance") {
        ConfigReader var = root.section("variance");
        var.required_numbers("L");
        var.integer("seeds", 8);
        var.numbers("p", std::vector<double>(cfg.env.dim, 1.0));
        var.number("r", 0);
        var.number("delta0", 0.2);
        var.integer("halvings", 3);
        var.number("h", 1.0 / 32);
        var.number("safety", 0.4);
        var.number("tol", 1e-7);
        var.check_unknown_keys();
        if (cfg.env.potential.kind != FieldKind::random_checkerboard &&
            cfg.env.potential.kind != FieldKind::smoothed_bumps)
            errors.push_back("ergodic-variance: needs a random potential field");
    } else if (cfg.kind == "property-suite") {
        detail::normalize_table_section(root, cfg.env.dim, errors);
        ConfigReader con = root.section("contraction");
        con.integer("pairs", 0);
        con.number("T", 0.5);
        con.number("eps", 0.2);
        con.number("h", 1.0 / 32);
        con.number("extent", 1);
        con.number("amplitude", 0.5);
        con.check_unknown_keys();
    }

    return cfg;
}

// Loads, parses, and normalizes. On any error the list is non-empty and the
// returned config must not be run.
inline ExperimentConfig validate_config(const std::string& path,
                                        std::vector<std::string>& errors) {
    json raw = load_config_file(path, errors);
    if (!errors.empty()) {
        ExperimentConfig cfg;
        return cfg;
    }
    return normalize_config(raw, errors);
}

}  // namespace hjhom
