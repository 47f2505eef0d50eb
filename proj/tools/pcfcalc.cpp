// pcfcalc: calculus and smooth-function constructions on p.c.f. self-similar
// fractals at finite graph-approximation level. Emits plot-ready CSV data and
// JSON certificates; all outputs are deterministic for a fixed configuration.

#include "pcf/borel.hpp"
#include "pcf/bump.hpp"
#include "pcf/bump_symmetric.hpp"
#include "pcf/heat.hpp"
#include "pcf/io.hpp"
#include "pcf/partition.hpp"
#include "pcf/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace pcf;

namespace {

struct RunConfig {
    std::string fractal = "interval";
    int level = 8;
    std::string out_dir = ".";

    PcfFractal load() const { return load_fractal(fractal); }

    void validate() const {
        if (level < 1 || level > 11)
            throw InvalidFractalSpec("level must be in [1, 11] for the CLI");
    }

    std::filesystem::path out(const std::string& name) const {
        std::filesystem::create_directories(out_dir);
        return std::filesystem::path(out_dir) / name;
    }

    Json echo() const {
        return Json{{"fractal", fractal}, {"level", level}, {"out_dir", out_dir}};
    }
};

struct Workbench {
    PcfFractal fractal;
    VertexTable table;
    LaplacianStack stack;
    std::unique_ptr<GreenSolver> green;

    explicit Workbench(const RunConfig& cfg) : fractal(cfg.load()) {
        table = build_vertex_table(fractal, cfg.level);
        stack = build_laplacian_stack(fractal, table);
        green = std::make_unique<GreenSolver>(stack);
    }
};

int cmd_verify(const RunConfig& cfg) {
    auto fractal = cfg.load();
    auto checks = run_invariant_suite(
        fractal, cfg.level, complete_graph_conductances(fractal.num_boundary()));
    bool all = true;
    for (const auto& c : checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  measured=" << c.measured
                  << " tolerance=" << c.tolerance << "\n";
        all = all && c.pass;
    }
    Json report{{"config", cfg.echo()}, {"checks", invariant_report_json(checks)},
                {"all_pass", all}};
    write_file(cfg.out("verify.json").string(), report.dump(2) + "\n");
    std::cout << (all ? "all invariants hold" : "invariant failures above") << "\n";
    return all ? 0 : 1;
}

int cmd_spectrum(const RunConfig& cfg, const std::string& bc_name) {
    Workbench wb(cfg);
    auto bc = bc_name == "neumann" ? BoundaryCondition::Neumann
                                   : BoundaryCondition::Dirichlet;
    auto dec = eigendecompose(wb.stack, bc);
    write_file(cfg.out("spectrum.csv").string(), spectrum_csv(dec.eigenvalues));
    std::cout << "wrote " << cfg.out("spectrum.csv").string() << " ("
              << dec.modes() << " modes, gap " << dec.spectral_gap << ")\n";
    return 0;
}

int cmd_kernel(const RunConfig& cfg) {
    Workbench wb(cfg);
    write_file(cfg.out("kernel.csv").string(),
               kernel_csv(wb.table, [&](int y) { return wb.green->kernel_column(y); }));
    std::cout << "wrote " << cfg.out("kernel.csv").string() << "\n";
    return 0;
}

struct BumpFlags {
    int l1 = 0, l2 = 0;
    double eps = 0.0;
    std::string emit = "u.csv";
    std::string cert = "cert.json";
};

BumpConfig default_bump_config(const PcfFractal& f) {
    BumpConfig cfg;
    if (f.name == "sierpinski-gasket") {
        cfg.l1 = cfg.l2 = 2;
        cfg.eps_target = 0.4;
    } else {
        cfg.l1 = cfg.l2 = 3;
        cfg.eps_target = 0.15;
    }
    return cfg;
}

Json bump_certificate_json(const BumpResult& r) {
    Json cert;
    cert["iterations"] = r.cert.iterations;
    cert["final_delta_sup"] = r.cert.final_delta_sup;
    cert["max_contraction_ratio"] = r.cert.max_contraction_ratio;
    cert["contraction_ratios"] = r.cert.contraction_ratios;
    cert["sup_err_off_Y"] = r.cert.sup_err_off_Y;
    cert["boundary_value_max"] = r.cert.boundary_value_max;
    cert["boundary_normal_max"] = r.cert.boundary_normal_max;
    cert["pullback_mass"] = r.cert.mass;
    cert["b0_condition"] = r.cert.cond_M;
    cert["chain_sup"] = r.cert.chain_sup;
    cert["matching_atoms"] = {{"all_junctions", r.cert.atom_all},
                              {"relative_all", r.cert.atom_rel_all},
                              {"contact_points", r.cert.atom_S},
                              {"relative_contact", r.cert.atom_rel_S},
                              {"level_decay_ratio", r.cert.atom_decay_ratio}};
    std::vector<double> b0(r.b0.data(), r.b0.data() + r.b0.size());
    cert["b0"] = b0;
    return cert;
}

int cmd_bump_fixedpoint(const RunConfig& cfg, const BumpFlags& flags) {
    Workbench wb(cfg);
    BumpConfig bc = default_bump_config(wb.fractal);
    if (flags.l1 > 0) bc.l1 = flags.l1;
    if (flags.l2 > 0) bc.l2 = flags.l2;
    if (flags.eps > 0) bc.eps_target = flags.eps;
    auto idx = build_boundary_cells(wb.stack, bc.l1, bc.l2);
    auto r = iterate_to_fixed_point(wb.stack, *wb.green, idx, bc);

    write_file(cfg.out(flags.emit).string(), grid_csv(wb.table, r.u));
    Json cert = bump_certificate_json(r);
    cert["config"] = cfg.echo();
    cert["config"]["l1"] = bc.l1;
    cert["config"]["l2"] = bc.l2;
    cert["config"]["eps_target"] = bc.eps_target;
    write_file(cfg.out(flags.cert).string(), cert.dump(2) + "\n");
    std::cout << "fixed point after " << r.cert.iterations << " iterations; |u-1| <= "
              << r.cert.sup_err_off_Y << " off the boundary cells\n"
              << "wrote " << cfg.out(flags.emit).string() << " and "
              << cfg.out(flags.cert).string() << "\n";
    return 0;
}

struct HeatFlags {
    double eps = 0.25;
    int J = 6;
    int k_max = 3;
    double c0_target = 0.5;
    std::string k_cells;  // comma-separated words whose closed union is K
    std::string emit = "v.csv";
    std::string diag = "heat.json";
};

int cmd_bump_heat(const RunConfig& cfg, const HeatFlags& flags) {
    Workbench wb(cfg);
    auto dec = eigendecompose(wb.stack, BoundaryCondition::Neumann);

    std::vector<int> K;
    {
        std::string cells = flags.k_cells;
        if (cells.empty()) cells = (wb.fractal.num_maps() == 2) ? "011,100" : "01,10";
        std::stringstream ss(cells);
        std::string tok;
        std::vector<char> in(wb.table.num_vertices(), 0);
        while (std::getline(ss, tok, ',')) {
            Word w = parse_word(tok, wb.fractal.num_maps());
            for (int id : wb.table.cell_vertex_ids(w)) in[id] = 1;
        }
        for (int x = 0; x < wb.table.num_vertices(); ++x)
            if (in[x]) K.push_back(x);
    }

    auto reg = build_cutoff_regions(dec, K, flags.eps, flags.J);
    auto sched = build_schedule(dec, reg, flags.eps, flags.k_max, flags.J,
                                flags.c0_target);
    Vector f = Vector::Zero(wb.table.num_vertices());
    for (int x : K) f(x) = 1.0;
    f /= l2_norm(wb.stack, f);
    auto res = heat_cutoff(dec, K, f, reg, sched);

    write_file(cfg.out(flags.emit).string(), grid_csv(wb.table, res.v));
    {
        std::ostringstream csv;
        csv << "j,t_j,D_j";
        for (int k = 0; k <= sched.k_max; ++k) csv << ",C_" << k << "_partial";
        csv << "\n";
        std::vector<double> partial(sched.k_max + 1, 0.0);
        for (size_t j = 1; j <= sched.times.size(); ++j) {
            if (j < sched.times.size())
                for (int k = 0; k <= sched.k_max; ++k)
                    partial[k] += std::pow(sched.times[j], -static_cast<double>(k)) *
                                  sched.D[j - 1];
            csv << j << ',' << detail::format_double(sched.times[j - 1]) << ','
                << detail::format_double(sched.D[j - 1]);
            for (int k = 0; k <= sched.k_max; ++k)
                csv << ',' << detail::format_double(partial[k]);
            csv << '\n';
        }
        write_file(cfg.out("schedule.csv").string(), csv.str());
    }
    Json diag;
    diag["config"] = cfg.echo();
    diag["config"]["epsilon"] = flags.eps;
    diag["config"]["J"] = flags.J;
    diag["config"]["C0_target"] = flags.c0_target;
    diag["schedule"] = {{"times", sched.times}, {"D", sched.D},      {"C", sched.C},
                        {"total_T", sched.total}, {"shift", sched.shift},
                        {"lambda", sched.lambda}, {"c_measured", sched.c_measured}};
    Json steps = Json::array();
    for (const auto& s : res.steps)
        steps.push_back({{"j", s.j},
                         {"t", s.t},
                         {"D", s.D},
                         {"norm_u", s.norm_u},
                         {"norm_v", s.norm_v},
                         {"lemma26_measured", s.diff_total},
                         {"lemma26_bound", s.bound_26},
                         {"lemma23_measured", s.diff_on_K},
                         {"lemma23_bound", s.bound_23},
                         {"lemma24_bound", 3.0}});
    diag["steps"] = steps;
    diag["final"] = {{"err_on_K", res.err_on_K},
                     {"leak_outside_eps", res.leak_outside},
                     {"nonnegative", res.nonnegative},
                     {"delta_norms", res.delta_norm},
                     {"delta_bounds", res.delta_bound},
                     {"bound_t1", res.bound_t1}};
    write_file(cfg.out(flags.diag).string(), diag.dump(2) + "\n");
    std::cout << "cutoff done: err_on_K=" << res.err_on_K
              << " leak=" << res.leak_outside << "\nwrote "
              << cfg.out(flags.emit).string() << ", schedule.csv, "
              << cfg.out(flags.diag).string() << "\n";
    return 0;
}

struct BorelFlags {
    int anchor = 0;
    std::vector<double> rho, sigma;
    std::string cell;  // empty: boundary anchor
    int m0 = 1;
    double eps_tail = 1.0;
    std::string emit = "f.csv";
    std::string report = "report.json";
};

int cmd_borel(const RunConfig& cfg, const BorelFlags& flags) {
    Workbench wb(cfg);
    require(!flags.rho.empty() && flags.rho.size() == flags.sigma.size(),
            "--rho and --sigma must be nonempty and equally long");
    const int L = static_cast<int>(flags.rho.size()) - 1;
    BorelWorkspace ws(wb.fractal, wb.stack, *wb.green,
                      default_bump_config(wb.fractal), std::max(L, 1));
    Jet jet;
    jet.rho = Eigen::Map<const Vector>(flags.rho.data(), flags.rho.size());
    jet.sigma = Eigen::Map<const Vector>(flags.sigma.data(), flags.sigma.size());

    BorelResult r;
    if (flags.cell.empty()) {
        r = assemble_borel(ws, flags.anchor, jet, flags.m0, flags.eps_tail);
    } else {
        Word w = parse_word(flags.cell, wb.fractal.num_maps());
        r = transfer_to_junction(ws, flags.anchor, jet, w, 0, flags.eps_tail);
    }
    write_file(cfg.out(flags.emit).string(), grid_csv(wb.table, r.f.value()));
    Json rep;
    rep["config"] = cfg.echo();
    rep["config"]["anchor"] = flags.anchor;
    rep["config"]["cell"] = flags.cell;
    rep["config"]["m0"] = flags.m0;
    rep["config"]["eps_tail"] = flags.eps_tail;
    rep["requested"] = {{"rho", flags.rho}, {"sigma", flags.sigma}};
    std::vector<double> arho(r.report.achieved_rho.data(),
                             r.report.achieved_rho.data() + r.report.achieved_rho.size());
    std::vector<double> asig(
        r.report.achieved_sigma.data(),
        r.report.achieved_sigma.data() + r.report.achieved_sigma.size());
    rep["achieved"] = {{"rho", arho}, {"sigma", asig}};
    rep["jet_residual"] = r.report.jet_residual;
    rep["scale"] = r.report.scale;
    rep["tail_sup"] = r.report.tail_sup;
    rep["norm_constants"] = r.report.norm_constants;
    write_file(cfg.out(flags.report).string(), rep.dump(2) + "\n");
    std::cout << "jet realized with residual " << r.report.jet_residual << "\nwrote "
              << cfg.out(flags.emit).string() << " and " << cfg.out(flags.report).string()
              << "\n";
    return 0;
}

struct PartitionFlags {
    std::string f = "constant";
    std::string cover;  // JSON path; empty: a built-in two-member cover
    int k_jet = 3;
    std::string emit_dir = "pieces";
};

OpenCover builtin_cover(const Workbench& wb) {
    OpenCover cov;
    CoverMember a, b;
    if (wb.fractal.num_maps() == 2) {
        a.cells = {{0, 0}, {0, 1}, {1, 0}};
        b.cells = {{0, 1}, {1, 0}, {1, 1}};
        auto at = [&](double x) { return wb.table.locate(Vector::Constant(1, x)); };
        a.points = {0, at(0.25), at(0.5)};
        b.points = {at(0.5), at(0.75), 1};
    } else {
        a.cells = {{0}, {1}, {2, 0}, {2, 1}};
        b.cells = {{2}};
        auto mid = [&](int i, int j) {
            return wb.table.locate(
                0.5 * (wb.fractal.boundary_point(i) + wb.fractal.boundary_point(j)));
        };
        Vector f2m01 = wb.fractal.maps[2].apply(
            0.5 * (wb.fractal.boundary_point(0) + wb.fractal.boundary_point(1)));
        a.points = {0, 1, mid(0, 1), mid(0, 2), mid(1, 2), wb.table.locate(f2m01)};
        b.points = {2};
    }
    cov.members = {a, b};
    return cov;
}

OpenCover cover_from_json(const Workbench& wb, const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot read cover " + path);
    Json j = Json::parse(in);
    OpenCover cov;
    for (const auto& m : j.at("members")) {
        CoverMember member;
        for (const auto& c : m.at("cells"))
            member.cells.push_back(
                parse_word(c.get<std::string>(), wb.fractal.num_maps()));
        if (m.contains("points"))
            for (const auto& p : m.at("points")) {
                Vector pt(wb.fractal.ambient_dim);
                for (int d = 0; d < wb.fractal.ambient_dim; ++d)
                    pt(d) = p[d].get<double>();
                int id = wb.table.locate(pt);
                require(id >= 0, "cover point is not a vertex");
                member.points.push_back(id);
            }
        cov.members.push_back(std::move(member));
    }
    return cov;
}

int cmd_partition(const RunConfig& cfg, const PartitionFlags& flags) {
    Workbench wb(cfg);
    BorelWorkspace ws(wb.fractal, wb.stack, *wb.green, default_bump_config(wb.fractal),
                      flags.k_jet + 1);

    ChainFunction f;
    if (flags.f == "constant") {
        f = chain_harmonic(Vector::Ones(wb.table.num_vertices()), flags.k_jet + 2);
    } else if (flags.f == "bump") {
        f = ws.bump_chain_at(cfg.level);
    } else {
        throw Error("--f must be 'constant' or 'bump'");
    }

    OpenCover cov = flags.cover.empty() ? builtin_cover(wb)
                                        : cover_from_json(wb, flags.cover);
    auto res = smooth_partition(wb.stack, ws, f, cov, flags.k_jet);

    std::filesystem::create_directories(cfg.out(flags.emit_dir));
    Json cert;
    cert["config"] = cfg.echo();
    cert["config"]["f"] = flags.f;
    cert["config"]["k_jet"] = flags.k_jet;
    Json pieces = Json::array();
    Vector sum = Vector::Zero(wb.table.num_vertices());
    for (size_t k = 0; k < res.pieces.size(); ++k) {
        const auto& p = res.pieces[k];
        sum += p.chain.value();
        std::string name = "piece_" + std::to_string(k) + ".csv";
        write_file((cfg.out(flags.emit_dir) / name).string(),
                   grid_csv(wb.table, p.chain.value()));
        auto pc = certify_piece(wb.stack, p, flags.k_jet);
        pieces.push_back({{"file", name},
                          {"member", p.member},
                          {"lambda_cells", p.lambda.cells.size()},
                          {"lambda_boundary_points", p.lambda.boundary.size()},
                          {"correction_cells", p.correction_words.size()},
                          {"atom_all", pc.atom_all},
                          {"atom_seam", pc.atom_seam}});
    }
    cert["pieces"] = pieces;
    cert["sum_error"] = (sum - f.value()).cwiseAbs().maxCoeff();
    write_file(cfg.out("partition.json").string(), cert.dump(2) + "\n");
    std::cout << "partition into " << res.pieces.size() << " pieces, sum error "
              << cert["sum_error"].get<double>() << "\nwrote "
              << cfg.out(flags.emit_dir).string() << "/piece_*.csv and "
              << cfg.out("partition.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"calculus on p.c.f. self-similar fractals"};
    app.require_subcommand(1);

    RunConfig cfg;
    if (const char* env = std::getenv("PCF_OUT_DIR")) cfg.out_dir = env;
    app.add_option("--fractal", cfg.fractal, "builtin name or fractal spec JSON path");
    app.add_option("--level", cfg.level, "approximation level M (<= 11)");
    app.add_option("--out", cfg.out_dir, "output directory (env PCF_OUT_DIR)");

    auto* verify = app.add_subcommand("verify", "run the cross-module invariant suite");

    auto* emit = app.add_subcommand("emit", "emit data for one subsystem");
    std::string which = "spectrum";
    std::string bc_name = "dirichlet";
    emit->add_option("which", which,
                     "spectrum|kernel|bump-fixedpoint|bump-heat|borel|partition")
        ->required();
    emit->add_option("--bc", bc_name, "spectrum boundary condition");

    BumpFlags bump_flags;
    auto* bump = app.add_subcommand("bump-fixedpoint", "fixed-point smooth bump");
    bump->add_option("--l1", bump_flags.l1, "boundary cell scale");
    bump->add_option("--l2", bump_flags.l2, "contact cell scale");
    bump->add_option("--eps", bump_flags.eps, "target |u-1| off the boundary cells");
    bump->add_option("--emit", bump_flags.emit, "output CSV");
    bump->add_option("--cert", bump_flags.cert, "certificate JSON");

    HeatFlags heat_flags;
    auto* heat = app.add_subcommand("bump-heat", "heat-semigroup cutoff");
    heat->add_option("--eps", heat_flags.eps, "cutoff neighborhood radius");
    heat->add_option("--steps", heat_flags.J, "schedule length J");
    heat->add_option("--kmax", heat_flags.k_max, "diagnostic order");
    heat->add_option("--c0-target", heat_flags.c0_target, "schedule C_0 target");
    heat->add_option("--k-cells", heat_flags.k_cells,
                     "comma-separated cell words whose closed union is K");
    heat->add_option("--emit", heat_flags.emit, "output CSV");
    heat->add_option("--diag", heat_flags.diag, "diagnostics JSON");

    BorelFlags borel_flags;
    auto* borel = app.add_subcommand("borel", "jet realization");
    borel->add_option("--anchor", borel_flags.anchor, "boundary position index");
    borel->add_option("--rho", borel_flags.rho, "Laplacian-power jet values");
    borel->add_option("--sigma", borel_flags.sigma, "normal-derivative jet values");
    borel->add_option("--cell", borel_flags.cell,
                      "cell word for a junction anchor (empty: boundary)");
    borel->add_option("--m0", borel_flags.m0, "support scale F_i^{m0}(X)");
    borel->add_option("--eps-tail", borel_flags.eps_tail, "tail bound epsilon");
    borel->add_option("--emit", borel_flags.emit, "output CSV");
    borel->add_option("--report", borel_flags.report, "report JSON");

    PartitionFlags part_flags;
    auto* part = app.add_subcommand("partition", "cover-subordinate decomposition");
    part->add_option("--f", part_flags.f, "constant|bump");
    part->add_option("--cover", part_flags.cover, "cover JSON path (default builtin)");
    part->add_option("--kjet", part_flags.k_jet, "certificate order");
    part->add_option("--emit-dir", part_flags.emit_dir, "piece output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.validate();
        if (app.got_subcommand(verify)) return cmd_verify(cfg);
        if (app.got_subcommand(emit)) {
            if (which == "spectrum") return cmd_spectrum(cfg, bc_name);
            if (which == "kernel") return cmd_kernel(cfg);
            if (which == "bump-fixedpoint") return cmd_bump_fixedpoint(cfg, bump_flags);
            if (which == "bump-heat") return cmd_bump_heat(cfg, heat_flags);
            if (which == "borel") {
                BorelFlags def = borel_flags;
                def.rho = {0.0};
                def.sigma = {1.0};
                def.anchor = 0;
                return cmd_borel(cfg, def);
            }
            if (which == "partition") return cmd_partition(cfg, part_flags);
            throw Error("unknown emit target '" + which + "'");
        }
        if (app.got_subcommand(bump)) return cmd_bump_fixedpoint(cfg, bump_flags);
        if (app.got_subcommand(heat)) return cmd_bump_heat(cfg, heat_flags);
        if (app.got_subcommand(borel)) return cmd_borel(cfg, borel_flags);
        if (app.got_subcommand(part)) return cmd_partition(cfg, part_flags);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
