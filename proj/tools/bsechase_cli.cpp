// bsechase: command-line front end for workload generation, solving and
// benchmark reports.
//
// Exit codes: 0 success, 2 some solve stopped before converging, 1 error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsechase/bench.hpp"
#include "bsechase/bse_model.hpp"
#include "bsechase/matrix_io.hpp"

namespace fs = std::filesystem;
using namespace bsechase;

namespace {

struct Options {
    std::string model;
    std::vector<double> ecut;
    std::string solver = "chase";
    std::size_t nev = 15;
    std::vector<std::size_t> nex{25};
    std::vector<std::size_t> ranks{1};
    std::size_t files = 1;
    double tol = 1e-10;
    std::uint64_t seed = 42;
    int reps = 1;
    bool deterministic = false;
    bool serialize_readers = false;
    std::string out = "bsechase_out";
    std::string points;
    std::size_t state = 1;
};

bench::ExperimentSpec to_spec(const Options& o) {
    bench::ExperimentSpec s;
    if (!o.model.empty()) s.model = load_model_config(o.model);
    s.ecuts = o.ecut;
    s.solver = o.solver;
    s.nev = o.nev;
    s.nex_list = o.nex;
    s.ranks = o.ranks;
    s.files = o.files;
    s.tol = o.tol;
    s.seed = o.seed;
    s.reps = o.reps;
    s.deterministic = o.deterministic;
    s.serialize_readers = o.serialize_readers;
    s.out = o.out;
    return s;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

int exit_code(const bench::ExperimentResult& r) {
    if (r.any_failed) return 1;
    if (r.any_partial) return 2;
    return 0;
}

/// report.csv (timings zeroed in deterministic mode, real ones go to
/// timings.csv), eigenvalues.csv and scaling.svg.
void write_outputs(const bench::ExperimentResult& res, const bench::ExperimentSpec& spec) {
    auto rows = res.rows();
    if (spec.deterministic) {
        bench::write_text_atomic(spec.out / "timings.csv", bench::to_csv(rows));
        bench::strip_timings(rows);
    }
    bench::emit_report(rows, spec.out);

    std::ostringstream ev;
    ev << "solver,ecut,ranks,nex,run,index,eigenvalue\n";
    for (const auto& rec : res.runs)
        for (std::size_t i = 0; i < rec.eigenvalues.size(); ++i)
            ev << rec.row.solver << ',' << fmt(rec.row.ecut) << ',' << rec.row.ranks << ',' << rec.row.nex << ','
               << rec.row.run << ',' << i + 1 << ',' << fmt(rec.eigenvalues[i]) << '\n';
    bench::write_text_atomic(spec.out / "eigenvalues.csv", ev.str());

    for (const auto& rec : res.runs) {
        std::cout << rec.row.solver << " N=" << rec.row.N << " ecut=" << rec.row.ecut << " ranks=" << rec.row.ranks
                  << " nex=" << rec.row.nex << " iterations=" << rec.row.iterations << " matvecs=" << rec.row.matvecs;
        if (!rec.eigenvalues.empty()) std::cout << " lambda1=" << fmt(rec.eigenvalues.front());
        std::cout << '\n';
        if (!rec.message.empty()) std::cerr << "  " << rec.message << '\n';
    }
}

int cmd_generate(const Options& o) {
    auto spec = to_spec(o);
    if (spec.ecuts.empty()) throw PreconditionError("generate: --ecut is required");
    const auto model = build_band_model(spec.model.band);
    for (double ecut : spec.ecuts) {
        const auto basis = enumerate_pairs(model, ecut);
        const auto h = assemble_hamiltonian(model, basis, spec.model.coupling);
        const auto dir = spec.out / ("ecut_" + bench::detail::ecut_tag(ecut));
        io::write_striped(h, dir, spec.files);
        std::cout << "ecut=" << ecut << " N=" << h.n() << " files=" << spec.files << " -> " << dir.string() << '\n';
    }
    return 0;
}

int cmd_solve(const Options& o) {
    const auto spec = to_spec(o);
    const auto res = bench::run_experiment(spec);
    write_outputs(res, spec);
    return exit_code(res);
}

int cmd_sweep(const Options& o) {
    const auto spec = to_spec(o);
    const auto sweep = bench::sweep_nex(spec);
    write_outputs(sweep.runs, spec);
    bench::write_text_atomic(spec.out / "sweep.csv", bench::sweep_table(sweep.entries, sweep.recommended_nex));
    std::cout << bench::sweep_table(sweep.entries, sweep.recommended_nex);
    std::cout << "recommended nex: " << sweep.recommended_nex << '\n';
    return exit_code(sweep.runs);
}

int cmd_scaling(const Options& o) {
    const auto spec = to_spec(o);
    const auto res = bench::run_experiment(spec);
    write_outputs(res, spec);

    // Mean totals per (solver, ranks) and efficiency against the smallest rank count.
    std::map<std::string, std::map<std::size_t, std::vector<double>>> t;
    for (const auto& r : res.rows())
        if (r.ok()) t[r.base_solver()][r.ranks].push_back(r.total_s);
    std::ostringstream table;
    table << "solver,ranks,mean_s,sd_s,efficiency\n";
    for (const auto& [solver, by_rank] : t) {
        const auto& [p0, t0s] = *by_rank.begin();
        const double t0 = bench::sample_stats(t0s).mean;
        for (const auto& [p, ts] : by_rank) {
            const auto st = bench::sample_stats(ts);
            const double eta = t0 > 0.0 && st.mean > 0.0
                                   ? bench::parallel_efficiency(t0, static_cast<double>(p0), st.mean, static_cast<double>(p))
                                   : 0.0;
            table << solver << ',' << p << ',' << fmt(st.mean) << ',' << fmt(st.sd) << ',' << fmt(eta) << '\n';
        }
    }
    bench::write_text_atomic(spec.out / "scaling.csv", table.str());
    std::cout << table.str();
    return exit_code(res);
}

std::vector<BindingPoint> read_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open points file", path);
    std::vector<BindingPoint> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        for (auto& ch : line)
            if (ch == ',') ch = ' ';
        std::istringstream ls(line);
        BindingPoint p;
        if (!(ls >> p.inverse_ecut)) continue;
        if (!(ls >> p.e_b)) throw FormatError("points file: expected '<inverse_ecut> <e_b>' in " + path);
        pts.push_back(p);
    }
    return pts;
}

int cmd_extrapolate(const Options& o) {
    const fs::path out = o.out;
    std::vector<BindingPoint> pts;
    int code = 0;
    if (!o.points.empty()) {
        pts = read_points(o.points);
    } else {
        auto spec = to_spec(o);
        spec.solver = "chase";
        spec.nex_list.resize(1);
        spec.ranks.resize(1);
        spec.reps = 1;
        const auto res = bench::run_experiment(spec);
        write_outputs(res, spec);
        code = exit_code(res);
        for (const auto& rec : res.runs) {
            if (!rec.row.ok()) continue;
            BindingPoint p;
            p.inverse_ecut = 1.0 / rec.row.ecut;
            p.state_index = o.state;
            if (rec.eigenvalues.size() < o.state) throw PreconditionError("extrapolate: --state exceeds --nev");
            p.e_b = rec.min_transition - rec.eigenvalues[o.state - 1];
            pts.push_back(p);
        }
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.inverse_ecut > b.inverse_ecut; });
    BindingSeries series{pts, {}};
    const auto fit = extrapolate_binding(series);
    bench::emit_binding_report(series.points, fit, "state" + std::to_string(o.state), out);
    std::cout << "points=" << fit.points << " slope=" << fmt(fit.slope) << " intercept=" << fmt(fit.intercept)
              << " r2=" << fmt(fit.r_squared) << '\n';
    return code;
}

int cmd_verify(const Options& o) {
    auto spec = to_spec(o);
    if (spec.ecuts.empty()) throw PreconditionError("verify: --ecut is required");
    const auto model = build_band_model(spec.model.band);
    bool all_ok = true;
    for (double ecut : spec.ecuts) {
        const auto basis = enumerate_pairs(model, ecut);
        const auto h = assemble_hamiltonian(model, basis, spec.model.coupling);
        const auto dir = spec.out / ("ecut_" + bench::detail::ecut_tag(ecut));
        io::write_striped(h, dir, spec.files);
        const auto manifest = io::read_manifest(dir);
        for (std::size_t r : spec.ranks) {
            const auto a = io::assemble_from_files(dir, r, {spec.serialize_readers});
            const auto rep = io::verify_blocked(a.blocked, manifest.checksum);
            const bool identical = rep.ok() && io::gather_blocked(a.blocked) == h;
            all_ok = all_ok && identical;
            std::cout << "ecut=" << ecut << " N=" << h.n() << " ranks=" << r << " files=" << spec.files
                      << " completion_messages=" << a.completion_log.messages
                      << " completion_bytes=" << a.completion_log.bytes
                      << " expected_bytes=" << io::expected_completion_bytes(a.blocked.layout)
                      << (identical ? " OK" : " MISMATCH") << '\n';
        }
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-spectrum eigensolvers for synthetic Bethe-Salpeter Hamiltonians"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "model config file (key = value)")->check(CLI::ExistingFile);
        sub->add_option("--ecut", o.ecut, "energy cutoff(s) in eV")->delimiter(',');
        sub->add_option("--solver", o.solver, "chase | kscg | both")->check(CLI::IsMember({"chase", "kscg", "both"}));
        sub->add_option("--nev", o.nev, "number of wanted eigenpairs");
        sub->add_option("--nex", o.nex, "extra search vectors (list for sweep-nex)")->delimiter(',');
        sub->add_option("--ranks", o.ranks, "logical rank count(s); must be perfect squares")->delimiter(',');
        sub->add_option("--files", o.files, "number of striped matrix files");
        sub->add_option("--tol", o.tol, "relative residual tolerance");
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--reps", o.reps, "repetitions per configuration");
        sub->add_flag("--deterministic", o.deterministic, "zero timing columns in report.csv");
        sub->add_flag("--serialize-readers", o.serialize_readers, "emulate a single shared reader");
        sub->add_option("--out", o.out, "output directory");
    };

    auto* gen = app.add_subcommand("generate", "write striped matrix files for each cutoff");
    auto* solve = app.add_subcommand("solve", "assemble and solve, write report.csv");
    auto* sweep = app.add_subcommand("sweep-nex", "solve with several nex values and recommend one");
    auto* scaling = app.add_subcommand("scaling", "solve for several rank counts, report efficiency");
    auto* extra = app.add_subcommand("extrapolate", "fit binding energy against inverse cutoff");
    auto* verify = app.add_subcommand("verify", "check the file pipeline reproduces the matrix bitwise");
    for (auto* s : {gen, solve, sweep, scaling, extra, verify}) common(s);
    extra->add_option("--points", o.points, "file of '<inverse_ecut> <e_b>' lines instead of solving");
    extra->add_option("--state", o.state, "1-based exciton index for the binding energy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_generate(o);
        if (*solve) return cmd_solve(o);
        if (*sweep) return cmd_sweep(o);
        if (*scaling) return cmd_scaling(o);
        if (*extra) return cmd_extrapolate(o);
        if (*verify) return cmd_verify(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
