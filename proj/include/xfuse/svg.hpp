#pragma once

#include <cstdio>
#include <string>

#include "metrics.hpp"

namespace xfuse {

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

// Renders a receiver operating characteristic curve into a fixed 480x470
// viewport: unit square axes, dashed chance diagonal, one polyline vertex per
// curve point, and a marker on the point closest to (0,1).
inline std::string roc_svg(const RocCurve& curve) {
    const double left = 60, top = 20, plot = 400;
    auto px = [&](double fpr) { return left + fpr * plot; };
    auto py = [&](double tpr) { return top + (1.0 - tpr) * plot; };
    using detail::svg_num;

    const double opt_t = optimal_threshold(curve);
    const RocPoint* opt = &curve.points.front();
    for (const RocPoint& p : curve.points)
        if (p.threshold == opt_t) opt = &p;

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"470\" "
         "viewBox=\"0 0 480 470\">\n";
    s += "<rect x=\"" + svg_num(left) + "\" y=\"" + svg_num(top) + "\" width=\"" + svg_num(plot) +
         "\" height=\"" + svg_num(plot) + "\" fill=\"white\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + svg_num(px(0)) + "\" y1=\"" + svg_num(py(0)) + "\" x2=\"" +
         svg_num(px(1)) + "\" y2=\"" + svg_num(py(1)) +
         "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < curve.points.size(); ++i) {
        if (i) s += " ";
        s += svg_num(px(curve.points[i].fpr)) + "," + svg_num(py(curve.points[i].tpr));
    }
    s += "\"/>\n";
    s += "<circle cx=\"" + svg_num(px(opt->fpr)) + "\" cy=\"" + svg_num(py(opt->tpr)) +
         "\" r=\"5\" fill=\"none\" stroke=\"navy\" stroke-width=\"2\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double f = i / 4.0;
        s += "<text x=\"" + svg_num(px(f)) + "\" y=\"" + svg_num(top + plot + 18) +
             "\" font-size=\"12\" text-anchor=\"middle\">" + svg_num(f) + "</text>\n";
        s += "<text x=\"" + svg_num(left - 8) + "\" y=\"" + svg_num(py(f) + 4) +
             "\" font-size=\"12\" text-anchor=\"end\">" + svg_num(f) + "</text>\n";
    }
    s += "<text x=\"" + svg_num(left + plot / 2) + "\" y=\"" + svg_num(top + plot + 40) +
         "\" font-size=\"14\" text-anchor=\"middle\">false positive rate</text>\n";
    s += "<text x=\"14\" y=\"" + svg_num(top + plot / 2) +
         "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         svg_num(top + plot / 2) + ")\">true positive rate</text>\n";
    s += "</svg>\n";
    return s;
}

// 2x2 count grid: rows are actual classes, columns are predicted classes.
inline std::string confusion_svg(const ConfusionMatrix& cm) {
    const double left = 110, top = 60, cell = 130;
    using detail::svg_num;
    struct CellSpec {
        size_t count;
        const char* tag;
        const char* fill;
        int row, col;
    };
    const CellSpec cells[4] = {
        {cm.tp, "TP", "#c8e6c9", 0, 0},
        {cm.fn, "FN", "#ffcdd2", 0, 1},
        {cm.fp, "FP", "#ffcdd2", 1, 0},
        {cm.tn, "TN", "#c8e6c9", 1, 1},
    };
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"360\" "
         "viewBox=\"0 0 400 360\">\n";
    for (const CellSpec& c : cells) {
        const double x = left + c.col * cell, y = top + c.row * cell;
        s += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" width=\"" + svg_num(cell) +
             "\" height=\"" + svg_num(cell) + "\" fill=\"" + c.fill + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + svg_num(x + cell / 2) + "\" y=\"" + svg_num(y + cell / 2) +
             "\" font-size=\"22\" text-anchor=\"middle\">" + std::to_string(c.count) + "</text>\n";
        s += "<text x=\"" + svg_num(x + cell / 2) + "\" y=\"" + svg_num(y + cell / 2 + 26) +
             "\" font-size=\"13\" text-anchor=\"middle\">" + c.tag + "</text>\n";
    }
    const char* col_names[2] = {"predicted +", "predicted -"};
    const char* row_names[2] = {"actual +", "actual -"};
    for (int i = 0; i < 2; ++i) {
        s += "<text x=\"" + svg_num(left + i * cell + cell / 2) + "\" y=\"" + svg_num(top - 12) +
             "\" font-size=\"14\" text-anchor=\"middle\">" + col_names[i] + "</text>\n";
        s += "<text x=\"" + svg_num(left - 10) + "\" y=\"" + svg_num(top + i * cell + cell / 2) +
             "\" font-size=\"14\" text-anchor=\"end\">" + row_names[i] + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace xfuse
