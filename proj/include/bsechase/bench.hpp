#pragma once

// Benchmark harness: scaling analytics, experiment runner, nex sweep and
// CSV / SVG reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bsechase/bse_model.hpp"
#include "bsechase/chase.hpp"
#include "bsechase/errors.hpp"
#include "bsechase/kscg.hpp"
#include "bsechase/matrix_io.hpp"

namespace bsechase::bench {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

/// Fraction of ideal strong scaling kept going from p_ref to p units.
inline double parallel_efficiency(double t_ref, double p_ref, double t, double p) {
    if (!(t_ref > 0.0 && p_ref > 0.0 && t > 0.0 && p > 0.0))
        throw PreconditionError("parallel_efficiency: all inputs must be positive");
    return (t_ref * p_ref) / (t * p);
}

inline double speedup(double t_baseline, double t_new) {
    if (!(t_baseline > 0.0 && t_new > 0.0)) throw PreconditionError("speedup: times must be positive");
    return t_baseline / t_new;
}

struct NexAnchor {
    double ecut = 0.0;
    int nex = 0;
};

/// Linear interpolation of nex between two cutoffs, rounded half up.
inline int interpolate_nex(double ecut, NexAnchor low, NexAnchor high) {
    if (!(low.ecut < high.ecut)) throw PreconditionError("interpolate_nex: need ecut_low < ecut_high");
    if (ecut < low.ecut || ecut > high.ecut) throw PreconditionError("interpolate_nex: ecut outside the anchor interval");
    const double slope = static_cast<double>(high.nex - low.nex) / (high.ecut - low.ecut);
    const double x = static_cast<double>(low.nex) + slope * (ecut - low.ecut);
    return static_cast<int>(std::floor(x + 0.5));
}

struct Stats {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

inline Stats sample_stats(std::span<const double> xs) {
    Stats s;
    s.count = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Report rows
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "solver,N,ecut,ranks,nev,nex,iterations,matvecs,read_s,complete_s,redistribute_s,lanczos_s,filter_s,qr_s,rr_s,"
    "resid_s,total_s,run";

/// One solver run. A run that did not finish normally carries a flag in the
/// solver field after a '+': "chase+partial", "kscg+failed", "chase+dense_fallback".
struct ReportRow {
    std::string solver;
    std::size_t N = 0;
    double ecut = 0.0;
    std::size_t ranks = 1;
    std::size_t nev = 0;
    std::size_t nex = 0;
    long long iterations = 0;
    std::uint64_t matvecs = 0;
    double read_s = 0.0;
    double complete_s = 0.0;
    double redistribute_s = 0.0;
    double lanczos_s = 0.0;
    double filter_s = 0.0;
    double qr_s = 0.0;
    double rr_s = 0.0;
    double resid_s = 0.0;
    double total_s = 0.0;
    int run = 0;

    std::string base_solver() const { return solver.substr(0, solver.find('+')); }
    std::string flag() const {
        const auto p = solver.find('+');
        return p == std::string::npos ? std::string{} : solver.substr(p + 1);
    }
    bool ok() const { return flag().empty() || flag() == "dense_fallback"; }
    double phase_sum() const {
        return read_s + complete_s + redistribute_s + lanczos_s + filter_s + qr_s + rr_s + resid_s;
    }
    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

namespace detail {

inline std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline std::string to_csv_line(const ReportRow& r) {
    using detail::fmt_real;
    std::ostringstream o;
    o << r.solver << ',' << r.N << ',' << fmt_real(r.ecut) << ',' << r.ranks << ',' << r.nev << ',' << r.nex << ','
      << r.iterations << ',' << r.matvecs << ',' << fmt_real(r.read_s) << ',' << fmt_real(r.complete_s) << ','
      << fmt_real(r.redistribute_s) << ',' << fmt_real(r.lanczos_s) << ',' << fmt_real(r.filter_s) << ','
      << fmt_real(r.qr_s) << ',' << fmt_real(r.rr_s) << ',' << fmt_real(r.resid_s) << ',' << fmt_real(r.total_s)
      << ',' << r.run;
    return o.str();
}

inline ReportRow parse_csv_line(const std::string& line) {
    const auto f = detail::split_csv(line);
    if (f.size() != 18) throw FormatError("report row: expected 18 fields, got " + std::to_string(f.size()));
    try {
        ReportRow r;
        r.solver = f[0];
        r.N = std::stoull(f[1]);
        r.ecut = std::stod(f[2]);
        r.ranks = std::stoull(f[3]);
        r.nev = std::stoull(f[4]);
        r.nex = std::stoull(f[5]);
        r.iterations = std::stoll(f[6]);
        r.matvecs = std::stoull(f[7]);
        r.read_s = std::stod(f[8]);
        r.complete_s = std::stod(f[9]);
        r.redistribute_s = std::stod(f[10]);
        r.lanczos_s = std::stod(f[11]);
        r.filter_s = std::stod(f[12]);
        r.qr_s = std::stod(f[13]);
        r.rr_s = std::stod(f[14]);
        r.resid_s = std::stod(f[15]);
        r.total_s = std::stod(f[16]);
        r.run = std::stoi(f[17]);
        return r;
    } catch (const std::logic_error&) {
        throw FormatError("report row: malformed field in '" + line + "'");
    }
}

/// Writes through a temporary file and renames it into place.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory", path.parent_path().string());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw IoError("cannot open for writing", tmp.string());
        out << text;
        out.flush();
        if (!out) throw IoError("write failed", tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move file into place", path.string());
}

inline std::string to_csv(std::span<const ReportRow> rows) {
    std::string s = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows) s += to_csv_line(r) + "\n";
    return s;
}

inline std::vector<ReportRow> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report", path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("report: unexpected header in " + path.string());
    std::vector<ReportRow> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(parse_csv_line(line));
    return rows;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentSpec {
    ModelConfig model;
    std::vector<double> ecuts;
    std::string solver = "chase";  // chase | kscg | both
    std::size_t nev = 15;
    std::vector<std::size_t> nex_list{25};
    std::vector<std::size_t> ranks{1};
    std::size_t files = 1;
    double tol = 1e-10;
    std::uint64_t seed = 42;
    int reps = 1;
    bool deterministic = false;
    bool serialize_readers = false;
    fs::path out = "bsechase_out";

    std::vector<std::string> solvers() const {
        if (solver == "both") return {"chase", "kscg"};
        if (solver == "chase" || solver == "kscg") return {solver};
        throw PreconditionError("experiment: unknown solver '" + solver + "'");
    }

    void validate() const {
        if (reps < 1) throw PreconditionError("experiment: repetitions must be at least 1");
        if (ecuts.empty()) throw PreconditionError("experiment: ecut list is empty");
        if (nex_list.empty()) throw PreconditionError("experiment: nex list is empty");
        if (ranks.empty()) throw PreconditionError("experiment: rank list is empty");
        if (nev == 0) throw PreconditionError("experiment: nev must be positive");
        if (files == 0) throw PreconditionError("experiment: need at least one file");
        (void)solvers();
    }
};

/// Everything a run produced beyond its CSV row.
struct RunRecord {
    ReportRow row;
    std::vector<double> eigenvalues;
    double min_transition = 0.0;
    std::string message;  // failure text, empty on success
};

struct ExperimentResult {
    std::vector<RunRecord> runs;
    bool any_partial = false;
    bool any_failed = false;

    std::vector<ReportRow> rows() const {
        std::vector<ReportRow> r;
        for (const auto& x : runs) r.push_back(x.row);
        return r;
    }
};

namespace detail {

inline std::string ecut_tag(double ecut) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", ecut);
    return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void fill_chase(ReportRow& row, const ChaseResult& r) {
    row.iterations = r.iterations;
    row.matvecs = r.matvecs;
    row.lanczos_s = r.phase_timers.at("lanczos");
    row.filter_s = r.phase_timers.at("filter");
    row.qr_s = r.phase_timers.at("qr");
    row.rr_s = r.phase_timers.at("rr");
    row.resid_s = r.phase_timers.at("resid");
}

inline void fill_kscg(ReportRow& row, const KscgResult& r) {
    row.iterations = r.sweeps;
    row.matvecs = r.matvecs;
}

}  // namespace detail

/// Solves one assembled matrix and returns the record (never throws for
/// solver failures; those become flagged rows).
inline RunRecord solve_one(const DenseHermitian& h, const std::string& solver, std::size_t nev, std::size_t nex,
                           double tol, std::uint64_t seed) {
    RunRecord rec;
    rec.row.solver = solver;
    rec.row.N = h.n();
    rec.row.nev = nev;
    rec.row.nex = nex;
    try {
        if (solver == "chase") {
            ChaseConfig cfg;
            cfg.nev = nev;
            cfg.nex = nex;
            cfg.tol = tol;
            cfg.seed = seed;
            try {
                auto r = chase_solve(h, cfg);
                detail::fill_chase(rec.row, r);
                rec.eigenvalues = r.values;
                if (r.dense_fallback) rec.row.solver += "+dense_fallback";
            } catch (const PartialConvergenceError<ChaseResult>& e) {
                detail::fill_chase(rec.row, e.partial());
                rec.eigenvalues = e.partial().values;
                rec.row.solver += "+partial";
                rec.message = e.what();
            }
        } else if (solver == "kscg") {
            KscgConfig cfg;
            cfg.nev = nev;
            cfg.block_extra = nex;
            cfg.tol = tol;
            cfg.seed = seed;
            try {
                auto r = kscg_solve(h, cfg);
                detail::fill_kscg(rec.row, r);
                rec.eigenvalues = r.values;
                if (r.dense_fallback) rec.row.solver += "+dense_fallback";
            } catch (const PartialConvergenceError<KscgResult>& e) {
                detail::fill_kscg(rec.row, e.partial());
                rec.eigenvalues = e.partial().values;
                rec.row.solver += "+partial";
                rec.message = e.what();
            }
        } else {
            throw PreconditionError("unknown solver '" + solver + "'");
        }
    } catch (const Error& e) {
        rec.row.solver = solver + "+failed";
        rec.message = e.what();
    }
    return rec;
}

/// Runs every (ecut, ranks, solver, nex, repetition) combination. Each
/// matrix is written once per cutoff as striped files and assembled through
/// the file pipeline for every run.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const auto model = build_band_model(spec.model.band);
    ExperimentResult out;
    for (double ecut : spec.ecuts) {
        const auto basis = enumerate_pairs(model, ecut);
        const auto h = assemble_hamiltonian(model, basis, spec.model.coupling);
        const auto dir = spec.out / "matrices" / ("ecut_" + detail::ecut_tag(ecut));
        io::write_striped(h, dir, spec.files);
        const auto manifest = io::read_manifest(dir);

        for (std::size_t ranks : spec.ranks) {
            for (const auto& solver : spec.solvers()) {
                for (std::size_t nex : spec.nex_list) {
                    for (int rep = 0; rep < spec.reps; ++rep) {
                        const auto t0 = std::chrono::steady_clock::now();
                        auto assembled = io::assemble_from_files(dir, ranks, {spec.serialize_readers});
                        const auto report = io::verify_blocked(assembled.blocked, manifest.checksum);
                        if (!report.ok()) throw FormatError("assembled matrix does not match its checksum in " + dir.string());
                        const auto gathered = io::gather_blocked(assembled.blocked);

                        auto rec = solve_one(gathered, solver, spec.nev, nex, spec.tol, spec.seed);
                        rec.min_transition = basis.min_transition();
                        rec.row.ecut = ecut;
                        rec.row.ranks = ranks;
                        rec.row.run = rep;
                        rec.row.read_s = assembled.seconds.read;
                        rec.row.complete_s = assembled.seconds.complete;
                        rec.row.redistribute_s = assembled.seconds.redistribute;
                        rec.row.total_s = detail::seconds_since(t0);
                        if (rec.row.flag() == "partial") out.any_partial = true;
                        if (rec.row.flag() == "failed") out.any_failed = true;
                        out.runs.push_back(std::move(rec));
                    }
                }
            }
        }
    }
    return out;
}

/// Zeroes all wall-clock columns so that reports compare bitwise.
inline void strip_timings(std::vector<ReportRow>& rows) {
    for (auto& r : rows)
        r.read_s = r.complete_s = r.redistribute_s = r.lanczos_s = r.filter_s = r.qr_s = r.rr_s = r.resid_s = r.total_s = 0.0;
}

// ---------------------------------------------------------------------------
// nex sweep
// ---------------------------------------------------------------------------

struct SweepEntry {
    std::size_t nex = 0;
    Stats matvecs;
    Stats seconds;
    std::size_t failed = 0;
};

struct SweepResult {
    std::vector<SweepEntry> entries;
    std::size_t recommended_nex = 0;
    ExperimentResult runs;
};

/// Minimum mean matvecs; equal means go to the smaller nex.
inline std::size_t recommend_nex(std::span<const SweepEntry> entries) {
    const SweepEntry* best = nullptr;
    for (const auto& e : entries) {
        if (e.matvecs.count == 0) continue;
        if (!best || e.matvecs.mean < best->matvecs.mean || (e.matvecs.mean == best->matvecs.mean && e.nex < best->nex))
            best = &e;
    }
    if (!best) throw Error("sweep_nex: every run failed");
    return best->nex;
}

inline std::vector<SweepEntry> summarize_sweep(std::span<const ReportRow> rows, std::span<const std::size_t> nex_list) {
    std::vector<SweepEntry> entries;
    for (std::size_t nex : nex_list) {
        SweepEntry e;
        e.nex = nex;
        std::vector<double> mv, sec;
        for (const auto& r : rows) {
            if (r.nex != nex) continue;
            if (!r.ok()) {
                ++e.failed;
                continue;
            }
            mv.push_back(static_cast<double>(r.matvecs));
            sec.push_back(r.total_s);
        }
        e.matvecs = sample_stats(mv);
        e.seconds = sample_stats(sec);
        entries.push_back(e);
    }
    return entries;
}

inline SweepResult sweep_nex(ExperimentSpec spec) {
    if (spec.nex_list.size() < 3) throw PreconditionError("sweep_nex: need at least three nex values");
    spec.solver = "chase";
    SweepResult res;
    res.runs = run_experiment(spec);
    const auto rows = res.runs.rows();
    res.entries = summarize_sweep(rows, spec.nex_list);
    res.recommended_nex = recommend_nex(res.entries);
    return res;
}

inline std::string sweep_table(std::span<const SweepEntry> entries, std::size_t recommended) {
    std::ostringstream o;
    o << "nex,matvecs_mean,matvecs_sd,seconds_mean,seconds_sd,runs,failed,recommended\n";
    for (const auto& e : entries)
        o << e.nex << ',' << detail::fmt_real(e.matvecs.mean) << ',' << detail::fmt_real(e.matvecs.sd) << ','
          << detail::fmt_real(e.seconds.mean) << ',' << detail::fmt_real(e.seconds.sd) << ',' << e.matvecs.count << ','
          << e.failed << ',' << (e.nex == recommended ? 1 : 0) << '\n';
    return o.str();
}

// ---------------------------------------------------------------------------
// SVG charts
// ---------------------------------------------------------------------------

namespace detail {

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double map(double v, double a, double b) const {
        const double x = log ? std::log10(v) : v;
        const double l = log ? std::log10(lo) : lo, h = log ? std::log10(hi) : hi;
        return h > l ? a + (x - l) / (h - l) * (b - a) : 0.5 * (a + b);
    }
};

inline Axis make_axis(const std::vector<double>& vals, bool log, double pad_frac = 0.05) {
    Axis ax;
    ax.log = log;
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    ax.lo = *mn;
    ax.hi = *mx;
    if (log) {
        ax.lo /= 1.25;
        ax.hi *= 1.25;
    } else {
        const double pad = (ax.hi > ax.lo ? ax.hi - ax.lo : std::max(1.0, std::abs(ax.hi))) * pad_frac;
        ax.lo -= pad;
        ax.hi += pad;
    }
    return ax;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    return colors[i % 5];
}

inline std::string svg_open(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"440\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"640\" height=\"440\" fill=\"white\"/>\n"
      << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
      << "<line x1=\"70\" y1=\"380\" x2=\"610\" y2=\"380\" stroke=\"black\"/>\n"
      << "<line x1=\"70\" y1=\"40\" x2=\"70\" y2=\"380\" stroke=\"black\"/>\n"
      << "<text x=\"340\" y=\"420\" text-anchor=\"middle\">" << xlabel << "</text>\n"
      << "<text x=\"18\" y=\"210\" text-anchor=\"middle\" transform=\"rotate(-90 18 210)\">" << ylabel << "</text>\n";
    return o.str();
}

inline std::string tick_labels(const Axis& x, const Axis& y) {
    std::ostringstream o;
    char buf[32];
    for (int k = 0; k <= 4; ++k) {
        const double fx = x.log ? std::pow(10.0, std::log10(x.lo) + k * (std::log10(x.hi) - std::log10(x.lo)) / 4)
                                : x.lo + k * (x.hi - x.lo) / 4;
        const double fy = y.log ? std::pow(10.0, std::log10(y.lo) + k * (std::log10(y.hi) - std::log10(y.lo)) / 4)
                                : y.lo + k * (y.hi - y.lo) / 4;
        std::snprintf(buf, sizeof buf, "%.4g", fx);
        o << "<text x=\"" << x.map(fx, 70, 610) << "\" y=\"396\" text-anchor=\"middle\">" << buf << "</text>\n";
        std::snprintf(buf, sizeof buf, "%.4g", fy);
        o << "<text x=\"64\" y=\"" << y.map(fy, 380, 40) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    return o.str();
}

}  // namespace detail

/// Mean total time against rank count, one line per solver, log-log.
inline std::string svg_time_vs_ranks(std::span<const ReportRow> rows) {
    std::map<std::string, std::map<std::size_t, std::vector<double>>> series;
    for (const auto& r : rows)
        if (r.ok() && r.total_s > 0.0) series[r.base_solver()][r.ranks].push_back(r.total_s);
    std::vector<double> xs, ys;
    for (const auto& [s, by_rank] : series)
        for (const auto& [p, ts] : by_rank) {
            xs.push_back(static_cast<double>(p));
            ys.push_back(sample_stats(ts).mean);
        }
    std::string svg = detail::svg_open("Time to solution vs ranks", "ranks", "seconds");
    if (xs.empty()) {
        svg += "<text x=\"340\" y=\"210\" text-anchor=\"middle\">no timed runs</text>\n</svg>\n";
        return svg;
    }
    const auto ax = detail::make_axis(xs, true), ay = detail::make_axis(ys, true);
    svg += detail::tick_labels(ax, ay);
    std::size_t idx = 0;
    for (const auto& [s, by_rank] : series) {
        std::ostringstream pts;
        for (const auto& [p, ts] : by_rank)
            pts << ax.map(static_cast<double>(p), 70, 610) << ',' << ay.map(sample_stats(ts).mean, 380, 40) << ' ';
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(idx)) + "\" stroke-width=\"2\" points=\"" +
               pts.str() + "\"/>\n";
        for (const auto& [p, ts] : by_rank) {
            std::ostringstream c;
            c << "<circle cx=\"" << ax.map(static_cast<double>(p), 70, 610) << "\" cy=\""
              << ay.map(sample_stats(ts).mean, 380, 40) << "\" r=\"3\" fill=\"" << detail::palette(idx) << "\"/>\n";
            svg += c.str();
        }
        svg += "<text x=\"600\" y=\"" + std::to_string(56 + 16 * idx) + "\" text-anchor=\"end\" fill=\"" +
               detail::palette(idx) + "\">" + s + "</text>\n";
        ++idx;
    }
    return svg + "</svg>\n";
}

/// Binding energy against inverse cutoff with the fitted line extended to 0.
inline std::string svg_binding(std::span<const BindingPoint> points, const LinearFit& fit, const std::string& label) {
    if (points.empty()) throw PreconditionError("svg_binding: no points");
    std::vector<double> xs{0.0}, ys{fit.intercept};
    for (const auto& p : points) {
        xs.push_back(p.inverse_ecut);
        ys.push_back(p.e_b);
    }
    const auto ax = detail::make_axis(xs, false), ay = detail::make_axis(ys, false, 0.15);
    std::string svg = detail::svg_open("Binding energy vs inverse cutoff (" + label + ")", "1 / E_cut (1/eV)", "E_b (eV)");
    svg += detail::tick_labels(ax, ay);
    const double xmax = *std::max_element(xs.begin(), xs.end());
    std::ostringstream o;
    o << "<line x1=\"" << ax.map(0.0, 70, 610) << "\" y1=\"" << ay.map(fit.intercept, 380, 40) << "\" x2=\""
      << ax.map(xmax, 70, 610) << "\" y2=\"" << ay.map(fit.intercept + fit.slope * xmax, 380, 40)
      << "\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>\n";
    for (const auto& p : points)
        o << "<circle cx=\"" << ax.map(p.inverse_ecut, 70, 610) << "\" cy=\"" << ay.map(p.e_b, 380, 40)
          << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "E_b(1/E_cut = 0) = %.3f eV", fit.intercept);
    o << "<text x=\"" << ax.map(0.0, 70, 610) + 8 << "\" y=\"" << ay.map(fit.intercept, 380, 40) - 8 << "\">" << buf
      << "</text>\n";
    return svg + o.str() + "</svg>\n";
}

/// Writes report.csv and scaling.svg into `dir`.
inline void emit_report(std::span<const ReportRow> rows, const fs::path& dir) {
    if (rows.empty()) throw PreconditionError("emit_report: no rows");
    write_text_atomic(dir / "report.csv", to_csv(rows));
    write_text_atomic(dir / "scaling.svg", svg_time_vs_ranks(rows));
}

inline void emit_binding_report(std::span<const BindingPoint> points, const LinearFit& fit, const std::string& label,
                                const fs::path& dir) {
    std::ostringstream o;
    o << "inverse_ecut,e_b,state_index\n";
    for (const auto& p : points) o << detail::fmt_real(p.inverse_ecut) << ',' << detail::fmt_real(p.e_b) << ',' << p.state_index << '\n';
    o << "# intercept," << detail::fmt_real(fit.intercept) << ",slope," << detail::fmt_real(fit.slope) << '\n';
    write_text_atomic(dir / ("binding_" + label + ".csv"), o.str());
    write_text_atomic(dir / ("binding_" + label + ".svg"), svg_binding(points, fit, label));
}

}  // namespace bsechase::bench
