#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/io.hpp"

namespace spillsense {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string svg_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline const char* plot_color(std::size_t k) {
    static const char* palette[] = {"#1f6f8b", "#d35400", "#27ae60",
                                    "#8e44ad", "#c0392b", "#2c3e50"};
    return palette[k % 6];
}

/// Round tick positions covering [lo, hi] with roughly `want` divisions.
inline std::vector<double> plot_ticks(double lo, double hi, int want = 5) {
    std::vector<double> out;
    if (!(hi > lo)) return {lo};
    double raw = (hi - lo) / want;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + 0.5 * step; v += step) out.push_back(v);
    return out;
}

}  // namespace detail

/// Writes a deterministic multi-series line chart. Non-finite samples are
/// skipped; an all-empty input still produces a labeled frame.
inline void render_line_plot(const std::string& path,
                             const std::vector<PlotSeries>& series,
                             const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label) {
    const double width = 860, height = 520;
    const double ml = 90, mr = 24, mt = 46, mb = 58;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const PlotSeries& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            xlo = std::min(xlo, s.x[k]);
            xhi = std::max(xhi, s.x[k]);
            ylo = std::min(ylo, s.y[k]);
            yhi = std::max(yhi, s.y[k]);
        }
    if (!(xhi > xlo)) {
        xlo = 0.0;
        xhi = 1.0;
    }
    if (!(yhi > ylo)) {
        double pad = std::max(1.0, std::abs(ylo));
        ylo -= 0.5 * pad;
        yhi = ylo + pad;
    } else {
        double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }
    auto px = [&](double x) { return ml + pw * (x - xlo) / (xhi - xlo); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - ylo) / (yhi - ylo)); };

    std::ofstream out(path);
    if (!out) throw IoError("render_line_plot: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"26\" font-family=\"monospace\" "
        << "font-size=\"16\" text-anchor=\"middle\">" << title << "</text>\n";

    for (double tx : detail::plot_ticks(xlo, xhi)) {
        double x = px(tx);
        out << "<line x1=\"" << detail::svg_num(x) << "\" y1=\""
            << detail::svg_num(mt) << "\" x2=\"" << detail::svg_num(x)
            << "\" y2=\"" << detail::svg_num(mt + ph)
            << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << detail::svg_num(x) << "\" y=\""
            << detail::svg_num(mt + ph + 20)
            << "\" font-family=\"monospace\" font-size=\"11\" "
               "text-anchor=\"middle\">"
            << format_number(tx, 6) << "</text>\n";
    }
    for (double ty : detail::plot_ticks(ylo, yhi)) {
        double y = py(ty);
        out << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\""
            << detail::svg_num(y) << "\" x2=\"" << detail::svg_num(ml + pw)
            << "\" y2=\"" << detail::svg_num(y) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << detail::svg_num(ml - 8) << "\" y=\""
            << detail::svg_num(y + 4)
            << "\" font-family=\"monospace\" font-size=\"11\" "
               "text-anchor=\"end\">"
            << format_number(ty, 6) << "</text>\n";
    }
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
        << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 14
        << "\" font-family=\"monospace\" font-size=\"13\" "
           "text-anchor=\"middle\">"
        << x_label << "</text>\n";
    out << "<text x=\"20\" y=\"" << mt + ph / 2
        << "\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\" "
        << "transform=\"rotate(-90 20 " << mt + ph / 2 << ")\">" << y_label
        << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string pts;
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            if (!std::isfinite(series[s].x[k]) || !std::isfinite(series[s].y[k]))
                continue;
            pts += detail::svg_num(px(series[s].x[k]));
            pts += ',';
            pts += detail::svg_num(py(series[s].y[k]));
            pts += ' ';
        }
        if (!pts.empty())
            out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\""
                << detail::plot_color(s) << "\" stroke-width=\"1.6\"/>\n";
        double ly = mt + 16 + 16 * static_cast<double>(s);
        out << "<line x1=\"" << detail::svg_num(ml + pw - 150) << "\" y1=\""
            << detail::svg_num(ly) << "\" x2=\"" << detail::svg_num(ml + pw - 126)
            << "\" y2=\"" << detail::svg_num(ly) << "\" stroke=\""
            << detail::plot_color(s) << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << detail::svg_num(ml + pw - 120) << "\" y=\""
            << detail::svg_num(ly + 4)
            << "\" font-family=\"monospace\" font-size=\"11\">"
            << series[s].label << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("render_line_plot: write failed for " + path);
}

/// One series per strategy (first-appearance order) from a metrics table;
/// time is plotted in hours.
inline std::vector<PlotSeries> series_from_metrics(
    const CsvTable& table, const std::string& value_column) {
    const int cs = table.column("strategy");
    const int ct = table.column("t");
    const int cv = table.column(value_column);
    std::vector<PlotSeries> out;
    for (const auto& row : table.rows) {
        const std::string& name = row[static_cast<std::size_t>(cs)];
        PlotSeries* series = nullptr;
        for (auto& s : out)
            if (s.label == name) series = &s;
        if (!series) {
            out.push_back({name, {}, {}});
            series = &out.back();
        }
        series->x.push_back(std::stod(row[static_cast<std::size_t>(ct)]) / 3600.0);
        series->y.push_back(std::stod(row[static_cast<std::size_t>(cv)]));
    }
    return out;
}

/// Renders the three error-vs-time charts from a persisted metrics CSV.
inline void render_metrics_plots(const std::string& metrics_csv,
                                 const std::string& out_dir) {
    CsvTable table = read_csv(metrics_csv);
    ensure_directory(out_dir);
    render_line_plot(out_dir + "/oil_error.svg",
                     series_from_metrics(table, "oil_error_m2"),
                     "Oil presence error", "time [h]", "error [m^2]");
    render_line_plot(out_dir + "/rms_current.svg",
                     series_from_metrics(table, "rms_current_mps"),
                     "RMS current error where oil is present", "time [h]",
                     "error [m/s]");
    render_line_plot(out_dir + "/cost.svg", series_from_metrics(table, "J"),
                     "Uncertainty cost", "time [h]", "J [m^2]");
}

/// Final-state map: presence fields as shaded cells plus sensor tracks from
/// waypoint tables (columns cycle,sensor_id,t,x,y,committed).
inline void render_final_map(
    const std::string& path,
    const std::vector<std::pair<std::string, const ScalarField*>>& fields,
    const std::vector<std::pair<std::string, const CsvTable*>>& tracks) {
    if (fields.empty()) throw ConfigError("render_final_map: no fields");
    const GridSpec& g = *fields.front().second->grid();
    const double width = 720, height = 760;
    const double ml = 50, mt = 46;
    const double pw = width - 2 * ml;
    const double ph = pw * (g.ny() * g.dy()) / (g.nx() * g.dx());
    const double x0 = g.origin().x - 0.5 * g.dx();
    const double y0 = g.origin().y - 0.5 * g.dy();
    const double lx = g.nx() * g.dx(), ly = g.ny() * g.dy();
    auto px = [&](double x) { return ml + pw * (x - x0) / lx; };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - y0) / ly); };

    std::ofstream out(path);
    if (!out) throw IoError("render_final_map: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"26\" font-family=\"monospace\" "
        << "font-size=\"15\" text-anchor=\"middle\">Final state</text>\n";
    out << "<rect x=\"" << detail::svg_num(ml) << "\" y=\"" << detail::svg_num(mt)
        << "\" width=\"" << detail::svg_num(pw) << "\" height=\""
        << detail::svg_num(ph) << "\" fill=\"#f4f9fc\" stroke=\"#333333\"/>\n";

    const double cw = pw / g.nx(), chh = ph / g.ny();
    for (std::size_t f = 0; f < fields.size(); ++f) {
        const ScalarField& field = *fields[f].second;
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                double v = field.at(i, j);
                if (v < 0.05) continue;
                Point c = g.cell_center(i, j);
                out << "<rect x=\"" << detail::svg_num(px(c.x - 0.5 * g.dx()))
                    << "\" y=\"" << detail::svg_num(py(c.y + 0.5 * g.dy()))
                    << "\" width=\"" << detail::svg_num(cw) << "\" height=\""
                    << detail::svg_num(chh) << "\" fill=\""
                    << detail::plot_color(f) << "\" fill-opacity=\""
                    << detail::svg_num(0.25 + 0.45 * std::min(v, 1.0))
                    << "\"/>\n";
            }
        double lyr = mt + ph + 22 + 16 * static_cast<double>(f);
        out << "<rect x=\"" << detail::svg_num(ml) << "\" y=\""
            << detail::svg_num(lyr - 9) << "\" width=\"12\" height=\"12\" fill=\""
            << detail::plot_color(f) << "\" fill-opacity=\"0.6\"/>\n";
        out << "<text x=\"" << detail::svg_num(ml + 18) << "\" y=\""
            << detail::svg_num(lyr + 2)
            << "\" font-family=\"monospace\" font-size=\"11\">"
            << fields[f].first << " presence</text>\n";
    }

    for (std::size_t tr = 0; tr < tracks.size(); ++tr) {
        const CsvTable& t = *tracks[tr].second;
        if (t.rows.empty()) continue;
        const int csid = t.column("sensor_id");
        const int cx = t.column("x");
        const int cy = t.column("y");
        const int cc = t.column("committed");
        std::vector<std::string> paths;
        for (const auto& row : t.rows) {
            if (row[static_cast<std::size_t>(cc)] != "1") continue;
            std::size_t sid =
                static_cast<std::size_t>(std::stoul(row[static_cast<std::size_t>(csid)]));
            if (paths.size() <= sid) paths.resize(sid + 1);
            paths[sid] += detail::svg_num(px(std::stod(row[static_cast<std::size_t>(cx)])));
            paths[sid] += ',';
            paths[sid] += detail::svg_num(py(std::stod(row[static_cast<std::size_t>(cy)])));
            paths[sid] += ' ';
        }
        const char* color = detail::plot_color(fields.size() + tr);
        for (const std::string& pts : paths)
            if (!pts.empty())
                out << "<polyline points=\"" << pts
                    << "\" fill=\"none\" stroke=\"" << color
                    << "\" stroke-width=\"1.2\" stroke-dasharray=\"4 2\"/>\n";
        double lyr = mt + ph + 22 +
                     16 * static_cast<double>(fields.size() + tr);
        out << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\""
            << detail::svg_num(lyr - 3) << "\" x2=\"" << detail::svg_num(ml + 12)
            << "\" y2=\"" << detail::svg_num(lyr - 3) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\" stroke-dasharray=\"4 2\"/>\n";
        out << "<text x=\"" << detail::svg_num(ml + 18) << "\" y=\""
            << detail::svg_num(lyr + 2)
            << "\" font-family=\"monospace\" font-size=\"11\">"
            << tracks[tr].first << " track</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("render_final_map: write failed for " + path);
}

}  // namespace spillsense
