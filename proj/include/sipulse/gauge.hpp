#pragma once

#include <vector>

#include "sipulse/core.hpp"

namespace sipulse {

// Part x operator x repeat measurement table. Frequency bins act as parts,
// facial regions as operators, SDE realizations as repeats.
struct GaugeTable {
    int parts = 0;
    int operators = 0;
    int repeats = 0;
    std::vector<double> m;  // m[(p * operators + o) * repeats + k]

    GaugeTable() = default;
    GaugeTable(int p, int o, int k)
        : parts(p), operators(o), repeats(k),
          m(static_cast<size_t>(p) * o * k, 0.0) {}

    double& at(int p, int o, int k) {
        return m[(static_cast<size_t>(p) * operators + o) * repeats + k];
    }
    double at(int p, int o, int k) const {
        return m[(static_cast<size_t>(p) * operators + o) * repeats + k];
    }
};

struct GaugeResult {
    double repeatability = 0.0;   // within-cell variance
    double reproducibility = 0.0;  // operator + interaction
    double operator_var = 0.0;
    double part_var = 0.0;
    double repeatability_pct = 0.0;
    double reproducibility_pct = 0.0;
    double operator_pct = 0.0;
    double part_pct = 0.0;
    bool degenerate = false;  // all measurements identical
};

// Two-way crossed ANOVA (with interaction) variance decomposition. Negative
// component estimates are clipped to zero; percentages of
// repeatability + reproducibility + part sum to 100.
inline GaugeResult gauge_rr(const GaugeTable& t) {
    const int P = t.parts, O = t.operators, K = t.repeats;
    if (P < 2 || O < 2) throw argument_error("gauge_rr: need at least 2 parts and 2 operators");
    if (K < 2) throw argument_error("gauge_rr: cannot estimate repeatability with K < 2");
    for (double x : t.m)
        if (!std::isfinite(x)) throw numeric_error("gauge_rr: non-finite measurement");

    // detect the all-equal table before any mean arithmetic; accumulated
    // roundoff would otherwise turn exact zeros into noise-ratio percentages
    bool all_equal = true;
    for (double x : t.m) all_equal = all_equal && x == t.m[0];
    if (all_equal) {
        GaugeResult r;
        r.degenerate = true;
        r.part_pct = 100.0;
        return r;
    }

    std::vector<double> part_mean(P, 0.0), op_mean(O, 0.0);
    std::vector<double> cell_mean(static_cast<size_t>(P) * O, 0.0);
    double grand = 0.0;
    for (int p = 0; p < P; ++p)
        for (int o = 0; o < O; ++o) {
            double cell = 0.0;
            for (int k = 0; k < K; ++k) cell += t.at(p, o, k);
            cell /= K;
            cell_mean[static_cast<size_t>(p) * O + o] = cell;
            part_mean[p] += cell / O;
            op_mean[o] += cell / P;
            grand += cell / (P * O);
        }

    double ss_part = 0.0, ss_op = 0.0, ss_int = 0.0, ss_err = 0.0;
    for (int p = 0; p < P; ++p) ss_part += (part_mean[p] - grand) * (part_mean[p] - grand);
    ss_part *= static_cast<double>(O) * K;
    for (int o = 0; o < O; ++o) ss_op += (op_mean[o] - grand) * (op_mean[o] - grand);
    ss_op *= static_cast<double>(P) * K;
    for (int p = 0; p < P; ++p)
        for (int o = 0; o < O; ++o) {
            const double d = cell_mean[static_cast<size_t>(p) * O + o] - part_mean[p] -
                             op_mean[o] + grand;
            ss_int += d * d;
            for (int k = 0; k < K; ++k) {
                const double e = t.at(p, o, k) - cell_mean[static_cast<size_t>(p) * O + o];
                ss_err += e * e;
            }
        }
    ss_int *= K;

    const double ms_part = ss_part / (P - 1);
    const double ms_op = ss_op / (O - 1);
    const double ms_int = ss_int / (static_cast<double>(P - 1) * (O - 1));
    const double ms_err = ss_err / (static_cast<double>(P) * O * (K - 1));

    GaugeResult r;
    r.repeatability = ms_err;
    const double v_int = std::max(0.0, (ms_int - ms_err) / K);
    r.operator_var = std::max(0.0, (ms_op - ms_int) / (static_cast<double>(P) * K));
    r.reproducibility = r.operator_var + v_int;
    r.part_var = std::max(0.0, (ms_part - ms_int) / (static_cast<double>(O) * K));

    const double total = r.repeatability + r.reproducibility + r.part_var;
    if (total == 0.0) {
        // all-equal table: no variance anywhere, report the part=100 convention
        r.degenerate = true;
        r.part_pct = 100.0;
        return r;
    }
    r.repeatability_pct = 100.0 * r.repeatability / total;
    r.reproducibility_pct = 100.0 * r.reproducibility / total;
    r.operator_pct = 100.0 * r.operator_var / total;
    r.part_pct = 100.0 * r.part_var / total;
    return r;
}

}  // namespace sipulse
