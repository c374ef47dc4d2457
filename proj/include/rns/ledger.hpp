#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rns/errors.hpp"
#include "rns/format.hpp"

namespace rns {

/// Exponent r = 2 + 2/sqrt(3) of the central estimate.
inline const double central_r = 2.0 + 2.0 / std::sqrt(3.0);

/// One ledger row at time t. Cumulative columns are trapezoid integrals from 0 to t.
struct LedgerRow {
    double time = 0.0;
    double kinetic = 0.0;              // (1/2) ||v||^2
    double dissipation_cum = 0.0;      // int ||grad v||^2
    double weighted_cum = 0.0;         // eps int int w |v|^2
    double timederiv_cum = 0.0;        // int ||v'||^2
    double grad_energy = 0.0;          // (1/2) ||grad v||^2 + (1/2) eps int w |v|^2
    double convective_work_cum = 0.0;  // int <DIV(R o v), v'>
    double lr_norm = 0.0;              // (1/r) int |v|^r
    double hessian_cum = 0.0;          // sum_i int int D^2 phi(v)[d_i v, d_i v]
    double pressure_work_cum = 0.0;    // int int p DIV(D phi o v)
    double lr_dissipation_cum = 0.0;   // int int |v|^(r-2) |grad v|^2
    double quad_value = 0.0;           // (1/2) int |v|^2 (quadrature)
    double quad_hessian_cum = 0.0;     // r = 2 instance of hessian_cum
    double quad_pressure_work_cum = 0.0;
    double smooth_value = 0.0;         // int h(v), h(x) = g(|x|^2/2), g(q) = q/(1+q)
    double smooth_hessian_cum = 0.0;
    double smooth_pressure_work_cum = 0.0;
    double weighted_mass = 0.0;        // int w |v|^2
    double divergence = 0.0;           // max |k . vhat| / max |k| |vhat|
    double mean_mode = 0.0;            // max_i |mean of v_i|

    bool operator==(const LedgerRow&) const = default;
};

struct LedgerColumn {
    const char* name;
    double LedgerRow::*member;
};

inline constexpr std::array<LedgerColumn, 20> ledger_columns{{
    {"time", &LedgerRow::time},
    {"kinetic", &LedgerRow::kinetic},
    {"dissipation_cum", &LedgerRow::dissipation_cum},
    {"weighted_cum", &LedgerRow::weighted_cum},
    {"timederiv_cum", &LedgerRow::timederiv_cum},
    {"grad_energy", &LedgerRow::grad_energy},
    {"convective_work_cum", &LedgerRow::convective_work_cum},
    {"lr_norm", &LedgerRow::lr_norm},
    {"hessian_cum", &LedgerRow::hessian_cum},
    {"pressure_work_cum", &LedgerRow::pressure_work_cum},
    {"lr_dissipation_cum", &LedgerRow::lr_dissipation_cum},
    {"quad_value", &LedgerRow::quad_value},
    {"quad_hessian_cum", &LedgerRow::quad_hessian_cum},
    {"quad_pressure_work_cum", &LedgerRow::quad_pressure_work_cum},
    {"smooth_value", &LedgerRow::smooth_value},
    {"smooth_hessian_cum", &LedgerRow::smooth_hessian_cum},
    {"smooth_pressure_work_cum", &LedgerRow::smooth_pressure_work_cum},
    {"weighted_mass", &LedgerRow::weighted_mass},
    {"divergence", &LedgerRow::divergence},
    {"mean_mode", &LedgerRow::mean_mode},
}};

inline constexpr const char* ledger_version_line = "# rns-ledger v1";

/// Time series of the energy functionals of one run.
struct EnergyLedger {
    double r = central_r;  // exponent of the lr_* and hessian columns
    double eps = 0.0;
    std::vector<LedgerRow> rows;

    bool empty() const { return rows.empty(); }
    const LedgerRow& front() const { return rows.front(); }
    const LedgerRow& back() const { return rows.back(); }

    std::vector<double> column(double LedgerRow::*member) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& row : rows) out.push_back(row.*member);
        return out;
    }

    bool operator==(const EnergyLedger&) const = default;
};

inline std::string ledger_header() {
    std::string h;
    for (std::size_t i = 0; i < ledger_columns.size(); ++i) {
        if (i) h += ',';
        h += ledger_columns[i].name;
    }
    return h;
}

/// CSV: version line, metadata line, header row, one line per row.
inline void write_ledger_csv(std::ostream& os, const EnergyLedger& ledger) {
    os << ledger_version_line << '\n';
    os << "# r=" << fmt::number(ledger.r) << " eps=" << fmt::number(ledger.eps) << '\n';
    os << ledger_header() << '\n';
    for (const auto& row : ledger.rows) {
        for (std::size_t i = 0; i < ledger_columns.size(); ++i) {
            if (i) os << ',';
            os << fmt::number(row.*(ledger_columns[i].member));
        }
        os << '\n';
    }
}

inline std::string ledger_csv(const EnergyLedger& ledger) {
    std::ostringstream os;
    write_ledger_csv(os, ledger);
    return os.str();
}

inline EnergyLedger read_ledger_csv(std::istream& is) {
    EnergyLedger ledger;
    std::string line;
    if (!std::getline(is, line) || line != ledger_version_line) throw IoError("ledger: missing version line");
    if (!std::getline(is, line) || line.rfind("# r=", 0) != 0) throw IoError("ledger: missing metadata line");
    {
        std::istringstream meta(line.substr(2));
        std::string tok;
        while (meta >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw IoError("ledger: bad metadata token '" + tok + "'");
            const std::string key = tok.substr(0, eq);
            const double value = fmt::parse_number(tok.substr(eq + 1));
            if (key == "r")
                ledger.r = value;
            else if (key == "eps")
                ledger.eps = value;
            else
                throw IoError("ledger: unknown metadata key '" + key + "'");
        }
    }
    if (!std::getline(is, line) || line != ledger_header())
        throw IoError("ledger: column header does not match this version");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        LedgerRow row;
        std::size_t start = 0;
        for (std::size_t i = 0; i < ledger_columns.size(); ++i) {
            const std::size_t end = line.find(',', start);
            const bool last = i + 1 == ledger_columns.size();
            if ((end == std::string::npos) != last) throw IoError("ledger: wrong number of fields");
            row.*(ledger_columns[i].member) =
                fmt::parse_number(std::string_view(line).substr(start, last ? std::string::npos : end - start));
            start = end + 1;
        }
        ledger.rows.push_back(row);
    }
    return ledger;
}

}  // namespace rns
