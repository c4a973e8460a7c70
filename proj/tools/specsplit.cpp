// specsplit: command-line front end.
//
//   specsplit solve    --domain D --k N [--h H] [--svg] [--csv] [--mesh-export]
//   specsplit hadamard --domain D [--k N]        last bump in D is the probe
//   specsplit split    --domain D --x X,Y --epsilon R [--M M] [--K K]
//   specsplit simplify --domain D --x X,Y --epsilon E [--K K]
//   specsplit report   --domain D [--k N]
//
// Artifacts go to --out (default "."). Errors are reported as one JSON object
// on stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "specsplit/specsplit.hpp"

namespace fs = std::filesystem;
using namespace specsplit;

namespace {

struct Options {
    std::string domain;
    int k = 6;
    double h = 0.02;
    double tol = 1e-9;
    double tau = 0.0;
    double epsilon = 0.0;
    std::string x;
    int K = 6;
    double M = 0.4;
    std::string out = ".";
    bool svg = false;
    bool csv = false;
    bool mesh_export = false;
};

constexpr int kPartial = 4;

void write_out(const Options& o, const std::string& name, const std::string& content) {
    fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::io, "cannot create output directory " + dir.string());
    write_atomic(dir / name, content);
}

Vec2 parse_point(const std::string& text) {
    auto comma = text.find(',');
    require(comma != std::string::npos, ErrorKind::invalid_parameter, "--x expects FLOAT,FLOAT");
    try {
        std::size_t used1 = 0, used2 = 0;
        std::string a = text.substr(0, comma), b = text.substr(comma + 1);
        Vec2 p{std::stod(a, &used1), std::stod(b, &used2)};
        require(used1 == a.size() && used2 == b.size(), ErrorKind::invalid_parameter, "--x expects FLOAT,FLOAT");
        return p;
    } catch (const std::logic_error&) {
        fail(ErrorKind::invalid_parameter, "--x expects FLOAT,FLOAT");
    }
}

SolverConfig solver_config(const Options& o) {
    require(o.h > 0.0 && std::isfinite(o.h), ErrorKind::invalid_parameter, "--h must be positive");
    require(o.tol > 0.0 && std::isfinite(o.tol), ErrorKind::invalid_parameter, "--tol must be positive");
    require(o.tau >= 0.0 && std::isfinite(o.tau), ErrorKind::invalid_parameter, "--tau must be >= 0");
    SolverConfig cfg;
    cfg.h = o.h;
    cfg.tol = o.tol;
    cfg.tau = o.tau;
    return cfg;
}

void export_mesh(const Options& o, const SolvedDomain& sd) {
    write_out(o, "mesh.txt", to_text([&](std::ostream& os) { write_mesh_text(os, sd.mesh); }));
    write_out(o, "stiffness.coo", to_text([&](std::ostream& os) { write_coo(os, sd.system.K); }));
    write_out(o, "mass.coo", to_text([&](std::ostream& os) { write_coo(os, sd.system.M); }));
}

void print_spectrum(const Spectrum& s) {
    for (std::size_t i = 0; i < s.k(); ++i) std::printf("%4zu  %.10g\n", i + 1, s.pairs[i].lambda);
    for (const auto& c : s.clusters)
        if (c.m >= 2) std::printf("cluster r=%d m=%d width=%.3g\n", c.r, c.m, c.width);
}

std::vector<BoundaryTrace> all_traces(const SolvedDomain& sd, std::vector<double>& cvals) {
    std::vector<BoundaryTrace> traces;
    cvals.clear();
    for (const auto& p : sd.spectrum.pairs) {
        double c = c_constant(sd.system.bc, p.lambda, sd.system.sigma);
        for (const Edge& e : sd.domain.edges()) {
            if (sd.system.edge_nodes.count(e.id) == 0) continue;
            traces.push_back(boundary_trace(sd.mesh, sd.system, p, e.id));
            cvals.push_back(c);
        }
    }
    return traces;
}

int cmd_solve(const Options& o) {
    require(o.k >= 1, ErrorKind::invalid_parameter, "--k must be >= 1");
    SolverConfig cfg = solver_config(o);
    PolygonalDomain domain = load_domain(o.domain);
    SolvedDomain sd = solve_domain(domain, o.k, cfg, resolve_tau(cfg));
    write_out(o, "spectrum.csv", to_text([&](std::ostream& os) { write_spectrum_csv(os, sd.spectrum); }));
    json rep = spectrum_to_json(sd.spectrum);
    rep["h"] = cfg.h;
    rep["nodes"] = sd.mesh.nodes.size();
    rep["dofs"] = sd.system.dimension();
    write_out(o, "spectrum.json", rep.dump(2) + "\n");
    if (o.svg)
        for (std::size_t i = 0; i < sd.spectrum.k(); ++i)
            write_out(o, "eigenfunction_" + std::to_string(i + 1) + ".svg",
                      svg_field(sd.mesh, sd.system.to_nodal(sd.spectrum.pairs[i].vector)));
    if (o.csv) {
        std::vector<double> cvals;
        auto traces = all_traces(sd, cvals);
        // One trace per (eigenpair, edge).
        std::ostringstream os;
        os.precision(17);
        os << "index,edge,s,u,du_dnu,grad_sq,g\n";
        std::size_t per = traces.size() / std::max<std::size_t>(sd.spectrum.k(), 1);
        for (std::size_t i = 0; i < traces.size(); ++i)
            for (const auto& smp : traces[i].samples)
                os << i / per + 1 << ',' << traces[i].edge_id << ',' << smp.s << ',' << smp.u << ',' << smp.du_dnu
                   << ',' << smp.grad_sq << ',' << smp.grad_sq - cvals[i] * smp.u * smp.u << '\n';
        write_out(o, "discriminant.csv", os.str());
    }
    if (o.mesh_export) export_mesh(o, sd);
    print_spectrum(sd.spectrum);
    return 0;
}

int cmd_hadamard(const Options& o) {
    require(o.k >= 1, ErrorKind::invalid_parameter, "--k must be >= 1");
    SolverConfig cfg = solver_config(o);
    PolygonalDomain given = load_domain(o.domain);
    std::vector<BumpSpec> bumps = given.bumps();
    require(!bumps.empty(), ErrorKind::invalid_domain, "hadamard needs a probe bump in the domain file");
    BumpSpec probe = bumps.back();
    bumps.pop_back();
    PolygonalDomain base = given.with_bumps(bumps);
    DeformationField field(base, probe);

    double tau = resolve_tau(cfg);
    SolvedDomain sd = solve_domain(base, o.k + 4, cfg, tau);
    const Cluster* cl = nullptr;
    for (const auto& c : sd.spectrum.clusters)
        if (c.r <= o.k && o.k < c.r + c.m) cl = &c;
    require(cl != nullptr, ErrorKind::lookup, "no cluster contains eigenvalue " + std::to_string(o.k));
    require(!cl->truncated, ErrorKind::solver, "cluster at eigenvalue " + std::to_string(o.k) + " is truncated");
    std::vector<EigenPair> pairs(sd.spectrum.pairs.begin() + (cl->r - 1), sd.spectrum.pairs.begin() + (cl->r - 1 + cl->m));
    HadamardReport rep = hadamard_matrix(sd.mesh, sd.system, pairs, field, cl->r);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> disc(discrete_derivative_matrix(sd.mesh, sd.system, pairs, field));

    json j = hadamard_to_json(rep);
    j["probe"] = {{"edge", probe.edge}, {"s0", probe.s0}, {"c", probe.c}, {"t", probe.t}};
    std::vector<double> discrete;
    for (Eigen::Index i = 0; i < disc.eigenvalues().size(); ++i) discrete.push_back(disc.eigenvalues()[i]);
    j["discrete_rates"] = discrete;

    std::ostringstream table;
    table.precision(12);
    table << "t,branch,fd_rate,predicted_rate,discrete_rate,rel_error,fd_minus_discrete\n";
    double scale = 0.0;
    for (double v : rep.predicted_rates) scale = std::max(scale, std::fabs(v));
    json fd = json::array();
    if (probe.t > 0.0) {
        for (double t : {probe.t, probe.t / 2.0, probe.t / 4.0}) {
            auto rates = fd_rates(sd.mesh, sd.system, sd.spectrum, cl->r, cl->m, field, t);
            for (std::size_t b = 0; b < rates.size(); ++b) {
                double err = std::fabs(rates[b] - rep.predicted_rates[b]) / std::max(scale, 1e-300);
                table << t << ',' << b + 1 << ',' << rates[b] << ',' << rep.predicted_rates[b] << ',' << discrete[b]
                      << ',' << err << ',' << rates[b] - discrete[b] << '\n';
            }
            fd.push_back({{"t", t}, {"rates", rates}});
        }
    } else {
        j["notice"] = "zero amplitude: finite differences skipped";
        std::fprintf(stderr, "notice: zero amplitude, finite differences skipped\n");
        for (std::size_t b = 0; b < rep.predicted_rates.size(); ++b)
            table << 0 << ',' << b + 1 << ",," << rep.predicted_rates[b] << ',' << discrete[b] << ",,\n";
    }
    j["fd"] = fd;
    write_out(o, "hadamard.json", j.dump(2) + "\n");
    write_out(o, "rates.csv", table.str());

    std::vector<BoundaryTrace> traces;
    std::vector<double> cvals;
    for (const auto& p : rotate_pairs(pairs, rep.branch_basis)) {
        traces.push_back(boundary_trace(sd.mesh, sd.system, p, probe.edge));
        cvals.push_back(rep.c_used);
    }
    write_out(o, "discriminant.csv", to_text([&](std::ostream& os) {
                  write_discriminant_csv(os, traces, cvals, cl->r);
              }));
    if (o.svg) {
        std::vector<std::vector<std::pair<double, double>>> series;
        for (std::size_t i = 0; i < traces.size(); ++i) {
            series.emplace_back();
            for (const auto& smp : traces[i].samples)
                series.back().emplace_back(smp.s, smp.grad_sq - cvals[i] * smp.u * smp.u);
        }
        write_out(o, "discriminant.svg", svg_plot(series));
    }
    if (o.mesh_export) export_mesh(o, sd);
    std::fputs(table.str().c_str(), stdout);
    return 0;
}

int cmd_split(const Options& o) {
    SolverConfig cfg = solver_config(o);
    require(o.K >= 2, ErrorKind::invalid_parameter, "--K must be >= 2");
    require(o.epsilon > 0.0 && std::isfinite(o.epsilon), ErrorKind::invalid_parameter, "--epsilon must be positive");
    Ball ball{parse_point(o.x), o.epsilon};
    PolygonalDomain domain = load_domain(o.domain);
    SplitConfig scfg;
    SolvedDomain sd = solve_domain(domain, o.K + 1 + scfg.extra_pairs, cfg, resolve_tau(cfg));
    auto cl = first_degenerate(sd.spectrum, o.K);
    if (!cl) {
        std::printf("first %d eigenvalues already simple\n", o.K);
        return 0;
    }
    SplitBudget budget = make_budget(o.M, sd.spectrum, cl->r, cl->m);
    SplitResult res = split_once(sd, *cl, ball, budget, cfg, scfg);
    json j = record_to_json(res.record);
    j["spectrum"] = spectrum_to_json(res.solved.spectrum);
    write_out(o, "split.json", j.dump(2) + "\n");
    write_out(o, "domain_after.json", serialize_domain(res.solved.domain));
    write_out(o, "overlay.svg", svg_overlay(domain, res.solved.domain, &ball));
    if (o.csv) write_out(o, "spectrum.csv", to_text([&](std::ostream& os) { write_spectrum_csv(os, res.solved.spectrum); }));
    if (o.mesh_export) export_mesh(o, res.solved);
    std::printf("split cluster r=%d m=%d: s0=%.6g c=%.6g t=%.6g post gap %.3g\n", cl->r, cl->m, res.record.s0,
                res.record.c, res.record.t, res.record.post_rel_gap);
    return 0;
}

int cmd_simplify(const Options& o) {
    SimplifyConfig cfg;
    cfg.solver = solver_config(o);
    require(o.epsilon > 0.0 && std::isfinite(o.epsilon), ErrorKind::invalid_parameter, "--epsilon must be positive");
    Vec2 x = parse_point(o.x);
    PolygonalDomain domain = load_domain(o.domain);
    SimplifyResult res = simplify_spectrum(domain, o.K, o.epsilon, x, cfg);
    write_out(o, "trace.csv", to_text([&](std::ostream& os) { write_trace_csv(os, res.trace); }));
    write_out(o, "trace.json", trace_to_json(res.trace).dump(2) + "\n");
    write_out(o, "final_domain.json", serialize_domain(res.domain));
    Ball ball{x, o.epsilon};
    write_out(o, "overlay.svg", svg_overlay(domain, res.domain, &ball));
    if (o.svg || o.mesh_export) {
        SolvedDomain fin = solve_domain(res.domain, o.K, cfg.solver, res.trace.tau);
        if (o.svg) write_out(o, "final_mesh.svg", svg_mesh(fin.mesh));
        if (o.mesh_export) export_mesh(o, fin);
    }
    std::printf("%s; splits %d; r history", res.trace.status.c_str(), res.trace.splits);
    for (int r : res.trace.r_history) std::printf(" %d", r);
    std::printf("\n");
    return res.trace.success ? 0 : kPartial;
}

int cmd_report(const Options& o) {
    require(o.k >= 1, ErrorKind::invalid_parameter, "--k must be >= 1");
    SolverConfig cfg = solver_config(o);
    PolygonalDomain domain = load_domain(o.domain);
    SolvedDomain sd = solve_domain(domain, o.k, cfg, resolve_tau(cfg));
    json j;
    j["domain"] = domain_to_json(domain);
    j["area"] = domain.area();
    j["perimeter"] = domain.perimeter();
    j["lipschitz"] = lipschitz_constant(domain);
    j["mesh"] = {{"nodes", sd.mesh.nodes.size()},
                 {"triangles", sd.mesh.triangles.size()},
                 {"min_angle_deg", sd.mesh.min_angle_deg()},
                 {"h", sd.mesh.h}};
    j["spectrum"] = spectrum_to_json(sd.spectrum);
    if (sd.spectrum.k() >= 4) {
        WeylFit w = weyl_check(sd.spectrum, domain.area());
        j["weyl"] = {{"slope", w.slope}, {"expected", w.expected}, {"deviation", w.deviation}};
    }
    write_out(o, "report.json", j.dump(2) + "\n");
    if (o.csv) write_out(o, "spectrum.csv", to_text([&](std::ostream& os) { write_spectrum_csv(os, sd.spectrum); }));
    if (o.svg) {
        write_out(o, "mesh.svg", svg_mesh(sd.mesh));
        std::vector<std::pair<double, double>> counting;
        for (std::size_t i = 0; i < sd.spectrum.k(); ++i)
            counting.emplace_back(sd.spectrum.pairs[i].lambda, static_cast<double>(i + 1));
        write_out(o, "counting.svg", svg_plot({counting}));
    }
    if (o.mesh_export) export_mesh(o, sd);
    std::fputs((j.dump(2) + "\n").c_str(), stdout);
    return 0;
}

void report_error(std::string_view kind, const std::string& message) {
    json j{{"error", std::string(kind)}, {"message", message}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Laplacian spectrum splitting on polygonal domains"};
    app.set_help_flag("--help", "print this help");
    app.require_subcommand(1);
    Options o;
    const std::pair<const char*, const char*> commands[] = {
        {"solve", "lowest eigenpairs and clusters"},
        {"hadamard", "predicted vs finite-difference eigenvalue rates for a probe bump"},
        {"split", "one split of the first degenerate cluster inside a ball"},
        {"simplify", "split until the first K eigenvalues are simple"},
        {"report", "domain, mesh and spectrum summary"},
    };
    std::map<std::string, int (*)(const Options&)> handlers{{"solve", cmd_solve},   {"hadamard", cmd_hadamard},
                                                            {"split", cmd_split},   {"simplify", cmd_simplify},
                                                            {"report", cmd_report}};
    for (auto [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->set_help_flag("--help", "print this help");
        sub->add_option("--domain", o.domain, "domain JSON file")->required();
        sub->add_option("--k", o.k, "number of eigenpairs (solve, report) or eigenvalue index (hadamard)");
        sub->add_option("--h", o.h, "target mesh size");
        sub->add_option("--tol", o.tol, "eigenpair relative residual tolerance");
        sub->add_option("--tau", o.tau, "cluster tolerance; 0 calibrates from the unit square");
        sub->add_option("--epsilon", o.epsilon, "ball radius");
        sub->add_option("--x", o.x, "boundary point FLOAT,FLOAT");
        sub->add_option("--K", o.K, "number of eigenvalues to make simple");
        sub->add_option("--M", o.M, "split budget constant in (0, 1/2)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_flag("--svg", o.svg, "write SVG plots");
        sub->add_flag("--csv", o.csv, "write extra CSV tables");
        sub->add_flag("--mesh-export", o.mesh_export, "write mesh and matrices");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return 2;
    }

    std::string name = app.get_subcommands().front()->get_name();
    bool needs_point = name == "split" || name == "simplify";
    try {
        if (needs_point) require(!o.x.empty(), ErrorKind::invalid_parameter, "--x is required for " + name);
        return handlers.at(name)(o);
    } catch (const Error& e) {
        report_error(to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        report_error("invalid_domain", e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 3;
    }
}
