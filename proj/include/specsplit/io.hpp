#pragma once

// Domain files, reports, CSV and SVG output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "specsplit/eigensolver.hpp"
#include "specsplit/error.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/mesh.hpp"
#include "specsplit/shape_derivative.hpp"
#include "specsplit/splitter.hpp"

namespace specsplit {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Domain files
//
//   {
//     "vertices": [[x, y], ...],          counter-clockwise, simple
//     "bc": "dirichlet" | "neumann" | "robin",
//     "sigma": number,                    required non-zero for robin
//     "bumps": [{"edge": int, "s0": number, "c": number, "t": number,
//                "resolution": int (optional, default 64)}]
//   }

inline json domain_to_json(const PolygonalDomain& d) {
    json j;
    j["vertices"] = json::array();
    for (const Vec2& v : d.vertices()) j["vertices"].push_back({v.x, v.y});
    j["bc"] = std::string(to_string(d.bc()));
    j["sigma"] = d.sigma();
    j["bumps"] = json::array();
    for (const auto& b : d.bumps()) {
        json jb{{"edge", b.edge}, {"s0", b.s0}, {"c", b.c}, {"t", b.t}};
        if (b.resolution != 64) jb["resolution"] = b.resolution;
        j["bumps"].push_back(jb);
    }
    return j;
}

inline PolygonalDomain domain_from_json(const json& j) {
    auto number = [](const json& v, const char* what) {
        require(v.is_number(), ErrorKind::invalid_domain, std::string(what) + " must be a number");
        return v.get<double>();
    };
    require(j.is_object(), ErrorKind::invalid_domain, "domain must be a JSON object");
    require(j.contains("vertices") && j["vertices"].is_array(), ErrorKind::invalid_domain,
            "domain needs a \"vertices\" array");
    std::vector<Vec2> verts;
    for (const auto& v : j["vertices"]) {
        require(v.is_array() && v.size() == 2, ErrorKind::invalid_domain, "each vertex must be [x, y]");
        verts.push_back({number(v[0], "vertex coordinate"), number(v[1], "vertex coordinate")});
    }
    BoundaryCondition bc = BoundaryCondition::dirichlet;
    if (j.contains("bc")) {
        require(j["bc"].is_string(), ErrorKind::invalid_domain, "\"bc\" must be a string");
        bc = parse_boundary_condition(j["bc"].get<std::string>());
    }
    double sigma = j.contains("sigma") ? number(j["sigma"], "sigma") : 0.0;
    std::vector<BumpSpec> bumps;
    if (j.contains("bumps")) {
        require(j["bumps"].is_array(), ErrorKind::invalid_domain, "\"bumps\" must be an array");
        for (const auto& jb : j["bumps"]) {
            require(jb.is_object(), ErrorKind::invalid_domain, "each bump must be an object");
            for (const char* key : {"edge", "s0", "c", "t"})
                require(jb.contains(key), ErrorKind::invalid_domain, std::string("bump missing \"") + key + "\"");
            require(jb["edge"].is_number_integer(), ErrorKind::invalid_domain, "bump edge must be an integer");
            BumpSpec b;
            b.edge = jb["edge"].get<int>();
            b.s0 = number(jb["s0"], "s0");
            b.c = number(jb["c"], "c");
            b.t = number(jb["t"], "t");
            if (jb.contains("resolution")) {
                require(jb["resolution"].is_number_integer(), ErrorKind::invalid_domain,
                        "bump resolution must be an integer");
                b.resolution = jb["resolution"].get<int>();
            }
            bumps.push_back(b);
        }
    }
    return PolygonalDomain(std::move(verts), bc, sigma, std::move(bumps));
}

inline PolygonalDomain parse_domain(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::invalid_domain, std::string("malformed domain JSON: ") + e.what());
    }
    return domain_from_json(j);
}

inline std::string serialize_domain(const PolygonalDomain& d) { return domain_to_json(d).dump(2) + "\n"; }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline PolygonalDomain load_domain(const std::filesystem::path& path) { return parse_domain(read_file(path)); }

/// Writes through a temporary file in the same directory, then renames.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
        out << content;
        out.flush();
        require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        fail(ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
    }
}

template <class Writer>
std::string to_text(Writer&& w) {
    std::ostringstream os;
    w(os);
    return os.str();
}

// ---------------------------------------------------------------------------
// Reports

inline json spectrum_to_json(const Spectrum& s) {
    json j;
    j["lambda"] = s.lambdas();
    json res = json::array();
    for (const auto& p : s.pairs) res.push_back(p.residual);
    j["residual"] = res;
    j["tau"] = s.tau;
    j["clusters"] = json::array();
    for (const auto& c : s.clusters) {
        json jc{{"r", c.r}, {"m", c.m}, {"width", c.width}, {"truncated", c.truncated}};
        jc["rel_gap_below"] = std::isfinite(c.rel_gap_below) ? json(c.rel_gap_below) : json(nullptr);
        jc["rel_gap_above"] = std::isfinite(c.rel_gap_above) ? json(c.rel_gap_above) : json(nullptr);
        j["clusters"].push_back(jc);
    }
    return j;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json j = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        j.push_back(row);
    }
    return j;
}

inline json hadamard_to_json(const HadamardReport& rep) {
    return json{{"r", rep.r},
                {"m", rep.m},
                {"lambda", rep.lambda},
                {"derivative_matrix", matrix_to_json(rep.derivative_matrix)},
                {"predicted_rates", rep.predicted_rates},
                {"fd_rates", rep.fd_rates},
                {"c_used", rep.c_used},
                {"curvature_term_included", rep.curvature_term_included}};
}

inline json record_to_json(const SplitRecord& r) {
    return json{{"n", r.n},
                {"ball", {{"center", {r.ball.center.x, r.ball.center.y}}, {"radius", r.ball.radius}}},
                {"M", r.M},
                {"d_r", r.d_r},
                {"r", r.r},
                {"m", r.m},
                {"edge", r.edge},
                {"s0", r.s0},
                {"c", r.c},
                {"t", r.t},
                {"t_cap", r.t_cap},
                {"c1_norm", r.c1_norm},
                {"pre", r.pre},
                {"post", r.post},
                {"shifts", r.shifts},
                {"stability_ratios", r.ratios},
                {"predicted_rates", r.predicted_rates},
                {"pre_rel_width", r.pre_rel_width},
                {"post_rel_gap", r.post_rel_gap},
                {"points", {r.point1, r.point2, r.point3, r.point4}},
                {"accepted", r.accepted},
                {"evaluations", r.evaluations},
                {"note", r.note}};
}

inline json trace_to_json(const SplitTrace& t) {
    json j;
    j["success"] = t.success;
    j["status"] = t.status;
    j["splits"] = t.splits;
    j["flattened"] = t.flattened;
    j["tau"] = t.tau;
    j["x"] = {t.x.x, t.x.y};
    j["epsilon"] = t.epsilon;
    j["r_history"] = t.r_history;
    j["lipschitz_before"] = t.lipschitz_before;
    j["lipschitz_after"] = t.lipschitz_after;
    j["localized"] = t.localized;
    j["initial_spectrum"] = t.initial_spectrum;
    j["final_spectrum"] = t.final_spectrum;
    j["records"] = json::array();
    for (const auto& r : t.records) j["records"].push_back(record_to_json(r));
    return j;
}

/// Discriminant CSV: one row per trace sample of every eigenfunction.
inline void write_discriminant_csv(std::ostream& os, const std::vector<BoundaryTrace>& traces,
                                   const std::vector<double>& cvals, int first_index = 1) {
    os.precision(17);
    os << "index,edge,s,u,du_dnu,grad_sq,g\n";
    for (std::size_t i = 0; i < traces.size(); ++i)
        for (const auto& smp : traces[i].samples)
            os << first_index + static_cast<int>(i) << ',' << traces[i].edge_id << ',' << smp.s << ',' << smp.u << ','
               << smp.du_dnu << ',' << smp.grad_sq << ',' << smp.grad_sq - cvals[i] * smp.u * smp.u << '\n';
}

// ---------------------------------------------------------------------------
// SVG

class SvgCanvas {
public:
    SvgCanvas(double xmin, double xmax, double ymin, double ymax, double width = 640.0)
        : x0_(xmin), y1_(ymax), scale_(width / std::max(xmax - xmin, 1e-300)) {
        width_ = width;
        height_ = (ymax - ymin) * scale_;
    }

    static SvgCanvas around(const std::vector<Vec2>& pts, double margin_frac = 0.05, double width = 640.0) {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const Vec2& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        double pad = margin_frac * std::max(xmax - xmin, ymax - ymin);
        return SvgCanvas(xmin - pad, xmax + pad, ymin - pad, ymax + pad, width);
    }

    void polygon(const std::vector<Vec2>& pts, const std::string& stroke, const std::string& fill,
                 double stroke_width = 1.0) {
        body_ << "<polygon points=\"";
        for (const Vec2& p : pts) body_ << px(p.x) << ',' << py(p.y) << ' ';
        body_ << "\" stroke=\"" << stroke << "\" fill=\"" << fill << "\" stroke-width=\"" << stroke_width << "\"/>\n";
    }

    void polyline(const std::vector<Vec2>& pts, const std::string& stroke, double stroke_width = 1.0) {
        body_ << "<polyline points=\"";
        for (const Vec2& p : pts) body_ << px(p.x) << ',' << py(p.y) << ' ';
        body_ << "\" stroke=\"" << stroke << "\" fill=\"none\" stroke-width=\"" << stroke_width << "\"/>\n";
    }

    void circle(Vec2 c, double r, const std::string& stroke) {
        body_ << "<circle cx=\"" << px(c.x) << "\" cy=\"" << py(c.y) << "\" r=\"" << r * scale_ << "\" stroke=\""
              << stroke << "\" fill=\"none\" stroke-dasharray=\"4 3\"/>\n";
    }

    void text(Vec2 at, const std::string& s, double size = 12.0) {
        body_ << "<text x=\"" << px(at.x) << "\" y=\"" << py(at.y) << "\" font-size=\"" << size
              << "\" font-family=\"sans-serif\">" << s << "</text>\n";
    }

    std::string str() const {
        std::ostringstream os;
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_
           << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           << body_.str() << "</svg>\n";
        return os.str();
    }

private:
    double px(double x) const { return (x - x0_) * scale_; }
    double py(double y) const { return (y1_ - y) * scale_; }

    double x0_, y1_, scale_;
    double width_ = 0.0, height_ = 0.0;
    std::ostringstream body_;
};

/// Diverging blue-white-red color for v in [-1, 1].
inline std::string diverging_color(double v) {
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0) {
        r = 255;
        g = b = static_cast<int>(std::lround(255 * (1 - v)));
    } else {
        b = 255;
        r = g = static_cast<int>(std::lround(255 * (1 + v)));
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::string svg_mesh(const TriMesh& mesh) {
    SvgCanvas cv = SvgCanvas::around(mesh.nodes);
    for (const auto& t : mesh.triangles)
        cv.polygon({mesh.nodes[static_cast<std::size_t>(t[0])], mesh.nodes[static_cast<std::size_t>(t[1])],
                    mesh.nodes[static_cast<std::size_t>(t[2])]},
                   "#334", "none", 0.3);
    return cv.str();
}

/// Heat map of a nodal field (one flat color per triangle).
inline std::string svg_field(const TriMesh& mesh, const Vector& nodal) {
    SvgCanvas cv = SvgCanvas::around(mesh.nodes);
    double vmax = std::max(nodal.cwiseAbs().maxCoeff(), 1e-300);
    for (const auto& t : mesh.triangles) {
        double v = (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / (3.0 * vmax);
        std::string col = diverging_color(v);
        cv.polygon({mesh.nodes[static_cast<std::size_t>(t[0])], mesh.nodes[static_cast<std::size_t>(t[1])],
                    mesh.nodes[static_cast<std::size_t>(t[2])]},
                   col, col, 0.2);
    }
    return cv.str();
}

/// Overlay of two domain outlines, with an optional ball.
inline std::string svg_overlay(const PolygonalDomain& before, const PolygonalDomain& after,
                               const Ball* ball = nullptr) {
    std::vector<Vec2> pts = before.boundary();
    pts.insert(pts.end(), after.boundary().begin(), after.boundary().end());
    SvgCanvas cv = SvgCanvas::around(pts);
    cv.polygon(before.boundary(), "#888", "#eef", 1.5);
    cv.polygon(after.boundary(), "#c22", "none", 1.0);
    if (ball) cv.circle(ball->center, ball->radius, "#27a");
    return cv.str();
}

/// Line plot of (x, y) series in a unit frame.
inline std::string svg_plot(const std::vector<std::vector<std::pair<double, double>>>& series) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    double ar = 0.6;
    SvgCanvas cv(-0.08, 1.02, -0.08, ar + 0.04);
    static const char* colors[] = {"#c22", "#27a", "#2a4", "#a72", "#72a", "#444"};
    cv.polyline({{0, 0}, {1, 0}}, "#000", 1.0);
    cv.polyline({{0, 0}, {0, ar}}, "#000", 1.0);
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::vector<Vec2> pts;
        for (auto [x, y] : series[i]) pts.push_back({(x - xmin) / (xmax - xmin), ar * (y - ymin) / (ymax - ymin)});
        cv.polyline(pts, colors[i % 6], 1.5);
    }
    std::ostringstream lo, hi;
    lo.precision(4);
    hi.precision(4);
    lo << ymin;
    hi << ymax;
    cv.text({-0.07, 0.0}, lo.str(), 10);
    cv.text({-0.07, ar}, hi.str(), 10);
    return cv.str();
}

}  // namespace specsplit
