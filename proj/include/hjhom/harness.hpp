#pragma once
// Experiment orchestration: the six canned experiment kinds, artifact
// persistence (manifest, per-stage CSVs, verdict summary), and table JSON
// round-tripping. Every data file is a pure function of the normalized
// config; the wall-clock timestamp lives only in the manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hjhom/config.hpp"
#include "hjhom/effective.hpp"
#include "hjhom/environment.hpp"
#include "hjhom/evolution.hpp"
#include "hjhom/grid.hpp"
#include "hjhom/metric.hpp"
#include "hjhom/model.hpp"
#include "hjhom/version.hpp"

namespace hjhom {

//============================================================================
// Table JSON round trip
//============================================================================

inline constexpr const char* table_schema = "effective-hamiltonian-table/1";

inline json table_to_json(const EffectiveHamiltonianTable& tab) {
    json j;
    j["schema"] = table_schema;
    j["pdim"] = tab.pdim;
    j["p1"] = tab.p1;
    j["p2"] = tab.p2;
    j["r"] = tab.r;
    j["value"] = tab.value;
    j["uncertainty"] = tab.uncertainty;
    j["model_digest"] = tab.model_digest;
    j["env_seed"] = tab.env_seed;
    j["delta0"] = tab.delta0;
    j["halvings"] = tab.halvings;
    j["h"] = tab.h;
    return j;
}

inline EffectiveHamiltonianTable table_from_json(const json& j) {
    if (!j.is_object() || j.value("schema", "") != table_schema)
        throw InvalidSpec(std::string("table file: expected schema ") + table_schema);
    EffectiveHamiltonianTable tab;
    try {
        tab.pdim = j.at("pdim").get<int>();
        tab.p1 = j.at("p1").get<std::vector<real>>();
        tab.p2 = j.at("p2").get<std::vector<real>>();
        tab.r = j.at("r").get<std::vector<real>>();
        tab.value = j.at("value").get<std::vector<real>>();
        tab.uncertainty = j.at("uncertainty").get<std::vector<real>>();
        tab.model_digest = j.value("model_digest", "");
        tab.env_seed = j.value("env_seed", std::uint64_t{0});
        tab.delta0 = j.value("delta0", 0.0);
        tab.halvings = j.value("halvings", 0);
        tab.h = j.value("h", 0.0);
    } catch (const json::exception& e) {
        throw InvalidSpec(std::string("table file: ") + e.what());
    }
    std::size_t n = tab.p1.size() * std::max<std::size_t>(1, tab.p2.size()) * tab.r.size();
    if (tab.value.size() != n || tab.uncertainty.size() != n)
        throw InvalidSpec("table file: value array does not match the axes");
    if (tab.pdim != 1 && tab.pdim != 2) throw InvalidSpec("table file: pdim must be 1 or 2");
    if (tab.pdim == 2 && tab.p2.empty()) throw InvalidSpec("table file: pdim 2 needs a p2 axis");
    return tab;
}

inline void save_table(const EffectiveHamiltonianTable& tab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidSpec("cannot write table file: " + path);
    out << table_to_json(tab).dump(2) << "\n";
}

inline EffectiveHamiltonianTable load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidSpec("cannot open table file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidSpec("table file " + path + ": " + e.what());
    }
    return table_from_json(j);
}

// Plot-friendly companion of the JSON document: one slope curve per r value.
inline void write_table_csv(const EffectiveHamiltonianTable& tab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidSpec("cannot write table csv: " + path);
    out << (tab.pdim == 2 ? "p1,p2,r,value,uncertainty\n" : "p1,r,value,uncertainty\n");
    std::size_t n2 = std::max<std::size_t>(1, tab.p2.size());
    for (std::size_t ir = 0; ir < tab.r.size(); ++ir)
        for (std::size_t i2 = 0; i2 < n2; ++i2)
            for (std::size_t i1 = 0; i1 < tab.p1.size(); ++i1) {
                std::size_t n = tab.idx(i1, i2, ir);
                out << fmt(tab.p1[i1]) << ',';
                if (tab.pdim == 2) out << fmt(tab.p2[i2]) << ',';
                out << fmt(tab.r[ir]) << ',' << fmt(tab.value[n]) << ','
                    << fmt(tab.uncertainty[n]) << '\n';
            }
}

//============================================================================
// Evolution exports
//============================================================================

// One row per (snapshot time, node, component).
inline void write_snapshots_csv(const std::vector<VectorGridField>& snapshots,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidSpec("cannot write snapshot file: " + path);
    bool two_d = !snapshots.empty() && snapshots.front().grid.dim == 2;
    out << (two_d ? "t,x,y,k,value\n" : "t,x,k,value\n");
    for (const auto& snap : snapshots) {
        const Grid& g = snap.grid;
        for (int k = 0; k < snap.components(); ++k)
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i) {
                    Point x = g.point(i, j);
                    out << fmt(snap.time) << "," << fmt(x[0]);
                    if (two_d) out << "," << fmt(x[1]);
                    out << "," << (k + 1) << "," << fmt(snap.comp[k][g.index(i, j)]) << "\n";
                }
    }
}

inline json evolution_report_json(const EvolutionResult& res) {
    json j;
    j["steps"] = res.steps;
    j["dt_min"] = res.dt_min;
    j["dt_max"] = res.dt_max;
    j["sup_bound"] = res.sup_bound;
    j["saturated"] = res.saturated;
    j["snapshots"] = res.snapshots.size();
    json hist = json::array();
    for (const auto& e : res.history)
        hist.push_back({{"t", e.t}, {"coupling", e.coupling}, {"sup", e.sup}});
    j["history"] = std::move(hist);
    return j;
}

inline void write_evolution_report_json(const EvolutionResult& res, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidSpec("cannot write report file: " + path);
    out << evolution_report_json(res).dump(2) << "\n";
}

//============================================================================
// Artifacts
//============================================================================

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
    std::string data_file;  // the file whose rows support the verdict
};

struct ExperimentArtifact {
    std::string out_dir;
    std::vector<std::string> files;  // relative names, data files only
    std::vector<Verdict> verdicts;
    json manifest;
    json summary;
    bool all_pass = true;
};

namespace detail {

// CSV sink with deterministic formatting (shortest round-trip decimals).
class CsvWriter {
  public:
    CsvWriter(ExperimentArtifact& art, const std::string& name, const std::string& header)
        : name_(name) {
        std::filesystem::path p = std::filesystem::path(art.out_dir) / name;
        out_.open(p);
        if (!out_) throw InvalidSpec("cannot write data file: " + p.string());
        out_ << header << "\n";
        art.files.push_back(name);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

    const std::string& name() const { return name_; }

  private:
    std::ofstream out_;
    std::string name_;
};

inline std::string cell(real v) { return fmt(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }

inline void add_verdict(ExperimentArtifact& art, const std::string& name, bool pass,
                        const std::string& detail, const std::string& data_file) {
    art.verdicts.push_back({name, pass, detail, data_file});
    art.all_pass = art.all_pass && pass;
}

template <class Fn>
auto run_stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const InvalidSpec& e) {
        throw InvalidSpec("stage " + name + ": " + e.what());
    } catch (const TableRange& e) {
        throw TableRange("stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw SolverFailure("stage " + name + ": " + e.what());
    }
}

inline Grid make_macro_grid(int dim, real extent, real h) {
    Grid g;
    g.dim = dim;
    g.h = h;
    g.origin = {0, 0};
    g.periodic = true;
    real n = extent / h;
    if (!(extent > 0) || !(h > 0) || std::abs(n - std::round(n)) > 1e-9)
        throw InvalidSpec("grid spacing " + fmt(h) + " must divide the extent " + fmt(extent));
    g.npts = {static_cast<int>(std::lround(n)), 1};
    if (dim == 2) g.npts[1] = g.npts[0];
    return g;
}

inline TableAxes axes_from_config(const json& tab, int dim) {
    TableAxes axes;
    axes.p1 = linspace(tab.at("p1_min").get<real>(), tab.at("p1_max").get<real>(),
                       tab.at("p1_count").get<int>());
    if (dim == 2)
        axes.p2 = linspace(tab.at("p2_min").get<real>(), tab.at("p2_max").get<real>(),
                           tab.at("p2_count").get<int>());
    axes.r = tab.at("r").get<std::vector<real>>();
    return axes;
}

inline HbarSchedule schedule_from_config(const json& tab) {
    HbarSchedule sch;
    sch.delta0 = tab.at("delta0").get<real>();
    sch.halvings = tab.at("halvings").get<int>();
    sch.h = tab.at("h").get<real>();
    sch.safety = tab.at("safety").get<real>();
    sch.tol = tab.at("tol").get<real>();
    sch.flatness_window = tab.at("flatness_window").get<real>();
    return sch;
}

// Shared by cell-table, property-suite, and convergence-study: builds the
// table, persists it, and asserts the structural properties on it.
inline EffectiveHamiltonianTable table_stage(const ExperimentConfig& cfg,
                                             ExperimentArtifact& art, std::uint64_t seed) {
    return run_stage("table", [&] {
        EnvironmentRealization env = realize(cfg.env, seed);
        TableAxes axes = axes_from_config(cfg.normalized.at("table"), cfg.env.dim);
        HbarSchedule sch = schedule_from_config(cfg.normalized.at("table"));
        EffectiveHamiltonianTable tab = build_table(cfg.model, env, axes, sch, cfg.workers);
        std::filesystem::path p = std::filesystem::path(art.out_dir) / "table.json";
        save_table(tab, p.string());
        art.files.push_back("table.json");
        write_table_csv(tab, (std::filesystem::path(art.out_dir) / "table.csv").string());
        art.files.push_back("table.csv");

        TablePropertyReport rep = check_effective_properties(tab, cfg.model, env);
        CsvWriter csv(art, "table_properties.csv", "check,holds,worst,detail");
        for (const auto& c : rep.checks) {
            csv.row({c.name, c.holds ? "1" : "0", cell(c.worst), "\"" + c.detail + "\""});
            add_verdict(art, "table-" + c.name, c.holds, c.detail, csv.name());
        }
        return tab;
    });
}

}  // namespace detail

//============================================================================
// Experiment kinds
//============================================================================

namespace detail {

inline void run_collapse_demo(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    const json& run = cfg.normalized.at("run");
    std::vector<real> eps_list = run.at("eps").get<std::vector<real>>();
    real T = run.at("T"), h = run.at("h"), extent = run.at("extent");
    real safety = run.at("safety"), tol = run.at("tol");
    real u_high = run.at("u_high"), u_low = run.at("u_low");
    int snapshots = run.at("snapshots");
    if (u_high < u_low)
        throw InvalidSpec("collapse-demo: u_high must not be below u_low");

    EnvironmentRealization env = realize(cfg.env, cfg.seed);
    real c = cfg.env.coupling.mean * cfg.model.coupling_weight[0];
    real gap = u_high - u_low;

    CsvWriter csv(art, "collapse.csv", "eps,t,reference,err_first,err_second");
    real worst2 = 0;
    for (real eps : eps_list) {
        EvolutionProblem prob;
        prob.model = cfg.model;
        prob.env = env;
        prob.eps = eps;
        prob.u0 = VectorGridField::zeros(make_macro_grid(cfg.env.dim, extent, h), 2);
        for (auto& v : prob.u0.comp[0]) v = u_high;
        for (auto& v : prob.u0.comp[1]) v = u_low;
        prob.T = T;
        for (int i = 1; i <= snapshots; ++i) prob.snapshot_times.push_back(T * i / snapshots);
        prob.safety = safety;
        EvolutionResult res =
            run_stage("evolve eps=" + fmt(eps), [&] { return evolve_system(prob); });
        real worst1 = 0;
        for (const auto& snap : res.snapshots) {
            real ref = u_low + gap / (1 + c * gap * snap.time / (eps * eps));
            real e1 = 0, e2 = 0;
            for (real v : snap.comp[0]) e1 = std::max(e1, std::abs(v - ref));
            for (real v : snap.comp[1]) e2 = std::max(e2, std::abs(v - u_low));
            worst1 = std::max(worst1, e1);
            worst2 = std::max(worst2, e2);
            csv.row({cell(eps), cell(snap.time), cell(ref), cell(e1), cell(e2)});
        }
        add_verdict(art, "collapse-error-eps-" + fmt(eps), worst1 <= tol,
                    "sup error " + fmt(worst1) + " vs tolerance " + fmt(tol), csv.name());
    }
    add_verdict(art, "second-component-frozen", worst2 <= 1e-12,
                "sup deviation " + fmt(worst2), csv.name());
}

inline void run_cell_table(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    table_stage(cfg, art, cfg.seed);
}

inline void run_property_suite(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    table_stage(cfg, art, cfg.seed);

    const json& con = cfg.normalized.at("contraction");
    int pairs = con.at("pairs");
    if (pairs <= 0) return;
    real T = con.at("T"), eps = con.at("eps"), h = con.at("h");
    real extent = con.at("extent"), amplitude = con.at("amplitude");

    EnvironmentRealization env = realize(cfg.env, cfg.seed);
    Grid g = make_macro_grid(cfg.env.dim, extent, h);
    int m = cfg.env.components;

    // random low-frequency trig profiles, seeded per pair and component
    auto profile = [&](std::uint64_t stream, int k) {
        std::vector<real> f(g.size());
        real c1 = 2 * uniform01(hash_counter(cfg.seed, stream, 4 * k)) - 1;
        real s1 = 2 * uniform01(hash_counter(cfg.seed, stream, 4 * k + 1)) - 1;
        real c2 = 2 * uniform01(hash_counter(cfg.seed, stream, 4 * k + 2)) - 1;
        real off = 2 * uniform01(hash_counter(cfg.seed, stream, 4 * k + 3)) - 1;
        for (int j = 0; j < g.npts[1]; ++j)
            for (int i = 0; i < g.npts[0]; ++i) {
                real x = g.origin[0] + i * g.h, y = g.origin[1] + j * g.h;
                real w = 2 * pi * (x + (g.dim == 2 ? y : 0)) / extent;
                f[g.index(i, j)] =
                    amplitude * (c1 * std::cos(w) + s1 * std::sin(w) + 0.5 * c2 * std::cos(2 * w) +
                                 off);
            }
        return f;
    };

    CsvWriter csv(art, "contraction.csv", "pair,t,gap,initial_gap,allowance");
    bool all_ok = true;
    real worst_excess = -std::numeric_limits<real>::infinity();
    for (int pr = 0; pr < pairs; ++pr) {
        EvolutionProblem prob;
        prob.model = cfg.model;
        prob.env = env;
        prob.eps = eps;
        prob.u0 = VectorGridField::zeros(g, m);
        VectorGridField v0 = VectorGridField::zeros(g, m);
        for (int k = 0; k < m; ++k) {
            prob.u0.comp[k] = profile(1000 + 2 * pr, k);
            v0.comp[k] = profile(1000 + 2 * pr + 1, k);
        }
        prob.T = T;
        for (int i = 1; i <= 4; ++i) prob.snapshot_times.push_back(T * i / 4);
        prob.safety = 0.1;
        NonExpansionReport rep =
            run_stage("contraction pair " + std::to_string(pr),
                      [&] { return evolve_pair_gap(prob, v0); });
        for (const auto& e : rep.entries) {
            csv.row({cell(pr), cell(e.t), cell(e.gap), cell(rep.gap0), cell(e.bound)});
            worst_excess = std::max(worst_excess, e.gap - e.bound);
        }
        all_ok = all_ok && rep.non_expansive;
    }
    add_verdict(art, "contraction-non-expansive", all_ok,
                "worst gap excess " + fmt(worst_excess), csv.name());
}

inline void run_metric_study(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    const json& met = cfg.normalized.at("metric");
    std::vector<real> mus = met.at("mu").get<std::vector<real>>();
    std::vector<std::vector<real>> pv = met.at("p").get<std::vector<std::vector<real>>>();
    std::vector<std::vector<real>> dv =
        met.at("directions").get<std::vector<std::vector<real>>>();
    std::vector<real> ts = met.at("ts").get<std::vector<real>>();
    std::vector<real> seed_list = met.at("seeds").get<std::vector<real>>();
    bool compare_table = met.at("compare_table");
    real consistency_tol = met.at("consistency_tol");

    MetricProblem base;
    base.model = cfg.model;
    base.env = realize(cfg.env, cfg.seed);
    base.p = Point{pv.at(0)[0], cfg.env.dim == 2 ? pv.at(0)[1] : 0};
    base.r = met.at("r");
    base.h = met.at("h");
    base.domain_radius = met.at("domain_radius");
    base.tol = met.at("tol");
    base.safety = met.at("safety");
    base.hbar_est = met.at("hbar_est");
    std::vector<Point> dirs;
    for (const auto& d : dv) dirs.push_back({d[0], cfg.env.dim == 2 ? d[1] : 0});

    EffectiveHamiltonianTable tab;
    if (compare_table) tab = table_stage(cfg, art, cfg.seed);

    CsvWriter ratios(art, "metric_ratios.csv", "mu,direction,t,component,ratio,cross_discrepancy");
    CsvWriter fits(art, "metric_fits.csv",
                   "mu,direction,M,fit_residual,barrier_clearance,residual,iters");
    real worst_clearance = std::numeric_limits<real>::infinity();
    for (real mu : mus) {
        MetricProblem prob = base;
        prob.mu = mu;
        HomogenizedMetricEstimate est =
            run_stage("metric mu=" + fmt(mu), [&] { return estimate_M(prob, dirs, ts); });
        for (std::size_t d = 0; d < dirs.size(); ++d) {
            for (std::size_t i = 0; i < ts.size(); ++i) {
                Point y{prob.exclusion[0] + ts[i] * dirs[d][0],
                        prob.exclusion[1] + ts[i] * dirs[d][1]};
                for (int k = 0; k < cfg.env.components; ++k)
                    ratios.row({cell(mu), cell(d), cell(ts[i]), cell(k + 1),
                                cell(metric_value(est.solve, y, k) / ts[i]),
                                cell(est.cross_disc[d][i])});
            }
            fits.row({cell(mu), cell(d), cell(est.M[d]), cell(est.fit_residual[d]),
                      cell(est.solve.barrier_clearance), cell(est.solve.residual),
                      cell(est.solve.iters)});
        }
        worst_clearance = std::min(worst_clearance, est.solve.barrier_clearance);

        if (compare_table) {
            MetricConsistency mc = run_stage("consistency mu=" + fmt(mu), [&] {
                return metric_consistency(est, tab, consistency_tol);
            });
            real worst = 0;
            for (real rd : mc.rel_discrepancy) worst = std::max(worst, rd);
            add_verdict(art, "metric-consistency-mu-" + fmt(mu), mc.pass,
                        "worst relative discrepancy " + fmt(worst) + " vs tolerance " +
                            fmt(consistency_tol),
                        fits.name());
        }
    }
    add_verdict(art, "metric-growth-sandwich", worst_clearance >= 0,
                "worst barrier clearance " + fmt(worst_clearance), fits.name());

    if (!seed_list.empty()) {
        std::vector<std::uint64_t> seeds;
        for (real s : seed_list) seeds.push_back(static_cast<std::uint64_t>(s));
        CsvWriter ens_csv(art, "metric_ensemble.csv", "mu,direction,t,spread,mean_M");
        for (real mu : mus) {
            MetricProblem prob = base;
            prob.mu = mu;
            MetricEnsemble ens = run_stage("ensemble mu=" + fmt(mu), [&] {
                return estimate_M_ensemble(prob, cfg.env, seeds, dirs, ts, cfg.workers);
            });
            for (std::size_t d = 0; d < dirs.size(); ++d)
                for (std::size_t i = 0; i < ts.size(); ++i)
                    ens_csv.row({cell(mu), cell(d), cell(ts[i]), cell(ens.spread[d][i]),
                                 cell(ens.mean_M[d])});
        }
    }
}

inline void run_ergodic_variance(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    const json& var = cfg.normalized.at("variance");
    std::vector<real> Ls = var.at("L").get<std::vector<real>>();
    int nseeds = var.at("seeds");
    std::vector<real> pv = var.at("p").get<std::vector<real>>();
    Point p{pv.at(0), cfg.env.dim == 2 ? pv.at(1) : 0};
    real r = var.at("r");
    HbarSchedule sch;
    sch.delta0 = var.at("delta0");
    sch.halvings = var.at("halvings");
    sch.h = var.at("h");
    sch.safety = var.at("safety");
    sch.tol = var.at("tol");

    std::vector<std::vector<real>> hbars(Ls.size(), std::vector<real>(nseeds));
    run_stage("variance sweep", [&] {
        parallel_for(Ls.size() * nseeds, cfg.workers, [&](std::size_t idx) {
            std::size_t li = idx / nseeds, si = idx % nseeds;
            EnvironmentSpec spec = cfg.env;
            spec.side = Ls[li];
            auto errs = validate(spec);
            if (!errs.empty())
                throw InvalidSpec("variance: side " + fmt(Ls[li]) + ": " + errs.front());
            EnvironmentRealization env = realize(spec, cfg.seed + si);
            hbars[li][si] = estimate_Hbar(cfg.model, env, p, r, sch).hbar;
        });
        return 0;
    });

    CsvWriter csv(art, "variance.csv", "L,seed,hbar");
    for (std::size_t li = 0; li < Ls.size(); ++li)
        for (int si = 0; si < nseeds; ++si)
            csv.row({cell(Ls[li]), cell(cfg.seed + si), cell(hbars[li][si])});

    CsvWriter sum(art, "variance_summary.csv", "L,mean,std");
    std::vector<real> stds;
    for (std::size_t li = 0; li < Ls.size(); ++li) {
        real mean = 0;
        for (real v : hbars[li]) mean += v;
        mean /= nseeds;
        real ss = 0;
        for (real v : hbars[li]) ss += sqr(v - mean);
        real sd = nseeds > 1 ? std::sqrt(ss / (nseeds - 1)) : 0;
        stds.push_back(sd);
        sum.row({cell(Ls[li]), cell(mean), cell(sd)});
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < stds.size(); ++i) decreasing = decreasing && stds[i] < stds[i - 1];
    std::string detail = "std per L:";
    for (real s : stds) detail += " " + fmt(s);
    add_verdict(art, "variance-decreasing", decreasing, detail, sum.name());
}

inline void run_convergence_study(const ExperimentConfig& cfg, ExperimentArtifact& art) {
    const json& run = cfg.normalized.at("run");
    std::vector<real> eps_list = run.at("eps").get<std::vector<real>>();
    real T = run.at("T"), t0 = run.at("t0"), h = run.at("h"), extent = run.at("extent");
    real safety = run.at("safety");
    real target_fraction = run.at("target_fraction");
    real fit_residual_max = run.at("fit_residual_max");
    real delta = run.at("delta");
    int snapshots = run.at("snapshots");
    std::uint64_t table_seed_offset = run.at("table_seed_offset").get<std::uint64_t>();
    const json& init = cfg.normalized.at("initial");
    std::vector<real> offsets = init.at("offsets").get<std::vector<real>>();
    real amplitude = init.at("amplitude");
    int modes = init.at("modes");
    const int m = cfg.env.components;
    if (static_cast<int>(offsets.size()) == 1) offsets.assign(m, offsets[0]);
    if (static_cast<int>(offsets.size()) != m)
        throw InvalidSpec("initial.offsets: needs one entry per component");

    // the ground-truth table comes from an independent draw of the same law
    EffectiveHamiltonianTable tab = table_stage(cfg, art, cfg.seed + table_seed_offset);

    std::vector<real> snap_times;
    for (int i = 1; i <= snapshots; ++i) snap_times.push_back(T * i / snapshots);

    auto base_at = [&](real x, real y) {
        real v = 0;
        for (int j = 1; j <= modes; ++j) {
            v += std::cos(2 * pi * j * x / extent) / j;
            if (cfg.env.dim == 2) v += std::cos(2 * pi * j * y / extent) / j;
        }
        return amplitude * v;
    };
    real min_offset = *std::min_element(offsets.begin(), offsets.end());

    // effective march on its own finer grid
    const json& eff = cfg.normalized.at("effective");
    Grid geff = make_macro_grid(cfg.env.dim, extent, eff.at("h").get<real>());
    EffectiveEvolutionProblem eprob;
    eprob.table = &tab;
    eprob.u0 = VectorGridField::zeros(geff, 1);
    for (int j = 0; j < geff.npts[1]; ++j)
        for (int i = 0; i < geff.npts[0]; ++i)
            eprob.u0.comp[0][geff.index(i, j)] =
                base_at(geff.origin[0] + i * geff.h, geff.origin[1] + j * geff.h) + min_offset;
    eprob.T = T;
    eprob.snapshot_times = snap_times;
    eprob.safety = eff.at("safety");
    EffectiveEvolutionResult eres =
        run_stage("effective march", [&] { return evolve_effective(eprob); });
    {
        CsvWriter csv(art, "effective.csv", "t,min,max,lip_x");
        for (std::size_t i = 0; i < eres.snapshots.size(); ++i) {
            const auto& f = eres.snapshots[i].comp[0];
            csv.row({cell(eres.snapshots[i].time),
                     cell(*std::min_element(f.begin(), f.end())),
                     cell(*std::max_element(f.begin(), f.end())), cell(eres.lip_x[i])});
        }
    }

    // oscillation of the effective solution over the comparison window
    real osc_lo = std::numeric_limits<real>::infinity(), osc_hi = -osc_lo;
    for (const auto& snap : eres.snapshots) {
        if (snap.time < t0 - 1e-12) continue;
        for (real v : snap.comp[0]) {
            osc_lo = std::min(osc_lo, v);
            osc_hi = std::max(osc_hi, v);
        }
    }
    real osc = osc_hi - osc_lo;

    Grid g = make_macro_grid(cfg.env.dim, extent, h);
    EnvironmentRealization env = realize(cfg.env, cfg.seed);
    CsvWriter per_t(art, "error_by_time.csv", "eps,t,err");
    CsvWriter per_eps(art, "error.csv", "eps,err,steps");
    std::vector<real> errors;
    BoundaryLayerFit blfit;
    for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
        real eps = eps_list[ei];
        EvolutionProblem prob;
        prob.model = cfg.model;
        prob.env = env;
        prob.eps = eps;
        prob.u0 = VectorGridField::zeros(g, m);
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i)
                    prob.u0.comp[k][g.index(i, j)] =
                        base_at(g.origin[0] + i * g.h, g.origin[1] + j * g.h) + offsets[k];
        prob.T = T;
        prob.snapshot_times = snap_times;
        prob.safety = safety;
        EvolutionResult res =
            run_stage("evolve eps=" + fmt(eps), [&] { return evolve_system(prob); });

        real e_eps = 0;
        for (std::size_t si = 0; si < res.snapshots.size(); ++si) {
            const auto& snap = res.snapshots[si];
            const auto& ubar = eres.snapshots[si].comp[0];
            real e_t = 0;
            for (int k = 0; k < m; ++k)
                for (int j = 0; j < g.npts[1]; ++j)
                    for (int i = 0; i < g.npts[0]; ++i) {
                        Point x{g.origin[0] + i * g.h, g.origin[1] + j * g.h};
                        real ref = grid_interpolate(geff, ubar, x);
                        e_t = std::max(e_t, std::abs(snap.comp[k][g.index(i, j)] - ref));
                    }
            per_t.row({cell(eps), cell(snap.time), cell(e_t)});
            if (snap.time >= t0 - 1e-12) e_eps = std::max(e_eps, e_t);
        }
        per_eps.row({cell(eps), cell(e_eps), cell(res.steps)});
        errors.push_back(e_eps);

        if (ei + 1 == eps_list.size()) {
            write_snapshots_csv(res.snapshots,
                                (std::filesystem::path(art.out_dir) / "snapshots.csv").string());
            art.files.push_back("snapshots.csv");
            write_evolution_report_json(
                res, (std::filesystem::path(art.out_dir) / "evolution_report.json").string());
            art.files.push_back("evolution_report.json");
            std::vector<real> lower0(g.size());
            for (int j = 0; j < g.npts[1]; ++j)
                for (int i = 0; i < g.npts[0]; ++i)
                    lower0[g.index(i, j)] =
                        base_at(g.origin[0] + i * g.h, g.origin[1] + j * g.h) + min_offset;
            blfit = run_stage("envelope fit",
                              [&] { return boundary_layer_profile(res, lower0, eps, delta); });
            CsvWriter env_csv(art, "envelope.csv", "t,M,fit");
            for (std::size_t i = 0; i < blfit.ts.size(); ++i) {
                real phi = eps + blfit.ts[i] + std::exp(-blfit.C2 * blfit.ts[i] / eps);
                env_csv.row({cell(blfit.ts[i]), cell(blfit.M[i]), cell(blfit.C1 * phi)});
            }
            add_verdict(art, "envelope-fit",
                        blfit.C2 > 0 && blfit.rel_residual <= fit_residual_max,
                        "C1 " + fmt(blfit.C1) + ", C2 " + fmt(blfit.C2) + ", residual " +
                            fmt(blfit.rel_residual) + " vs " + fmt(fit_residual_max),
                        env_csv.name());
            add_verdict(art, "lower-barrier-finite",
                        std::isfinite(blfit.lower_slack),
                        "fitted slack constant " + fmt(blfit.lower_slack) + " at delta " +
                            fmt(delta),
                        env_csv.name());
        }
    }

    bool decreasing = true;
    for (std::size_t i = 1; i < errors.size(); ++i)
        decreasing = decreasing && errors[i] < errors[i - 1];
    std::string detail = "e(eps):";
    for (real e : errors) detail += " " + fmt(e);
    add_verdict(art, "error-monotone", decreasing, detail, "error.csv");
    if (target_fraction > 0)
        add_verdict(art, "error-final", errors.back() <= target_fraction * osc,
                    "e " + fmt(errors.back()) + " vs " + fmt(target_fraction) +
                        " of oscillation " + fmt(osc),
                    "error.csv");
}

}  // namespace detail

//============================================================================
// Entry point
//============================================================================

inline ExperimentArtifact run_experiment(const ExperimentConfig& cfg) {
    ExperimentArtifact art;
    art.out_dir = cfg.out_dir;
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw InvalidSpec("cannot create output directory " + cfg.out_dir);

    if (cfg.kind == "collapse-demo")
        detail::run_collapse_demo(cfg, art);
    else if (cfg.kind == "convergence-study")
        detail::run_convergence_study(cfg, art);
    else if (cfg.kind == "cell-table")
        detail::run_cell_table(cfg, art);
    else if (cfg.kind == "metric-study")
        detail::run_metric_study(cfg, art);
    else if (cfg.kind == "ergodic-variance")
        detail::run_ergodic_variance(cfg, art);
    else if (cfg.kind == "property-suite")
        detail::run_property_suite(cfg, art);
    else
        throw InvalidSpec("unknown experiment kind '" + cfg.kind + "'");

    art.summary = json::object();
    art.summary["kind"] = cfg.kind;
    art.summary["all_pass"] = art.all_pass;
    art.summary["verdicts"] = json::array();
    for (const auto& v : art.verdicts)
        art.summary["verdicts"].push_back(
            {{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}, {"data", v.data_file}});
    {
        std::ofstream out(std::filesystem::path(cfg.out_dir) / "summary.json");
        if (!out) throw InvalidSpec("cannot write summary.json");
        out << art.summary.dump(2) << "\n";
        art.files.push_back("summary.json");
    }

    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    art.manifest = json::object();
    art.manifest["schema"] = "experiment-manifest/1";
    art.manifest["kind"] = cfg.kind;
    art.manifest["config_digest"] = config_digest(cfg.normalized);
    art.manifest["version"] = version();
    art.manifest["seed"] = cfg.seed;
    art.manifest["unix_time"] = secs;
    art.manifest["files"] = art.files;
    art.manifest["normalized_config"] = cfg.normalized;
    {
        std::ofstream out(std::filesystem::path(cfg.out_dir) / "manifest.json");
        if (!out) throw InvalidSpec("cannot write manifest.json");
        out << art.manifest.dump(2) << "\n";
    }
    return art;
}

}  // namespace hjhom
