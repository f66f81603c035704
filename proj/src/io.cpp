#include "pgd/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pgd/error.hpp"

namespace pgd::io {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary); // binary keeps line endings stable
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "' for reading");
    return f;
}

double parse_double(const std::string& s, const std::string& path) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\r')) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("'" + path + "': not a number: '" + s + "'");
    }
}

std::vector<std::string> split_comma(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_dense_csv(const std::string& path, const DenseTensor& t) {
    if (!t.space) throw ConfigError("write_dense_csv: tensor has no space");
    auto f = open_out(path);
    f << "dims:";
    for (int j = 0; j < t.space->order(); ++j) f << (j ? "," : " ") << t.space->dim(j);
    f << "\n";
    for (double x : t.values) f << format_double(x) << "\n";
}

DenseTensor read_dense_csv(const std::string& path, SpacePtr space) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("'" + path + "' is empty");
    if (line.rfind("dims:", 0) != 0)
        throw ConfigError("'" + path + "': first line must be 'dims: n_1,n_2,...'");
    std::vector<int> dims;
    for (const auto& tok : split_comma(line.substr(5))) {
        const double v = parse_double(tok, path);
        if (v < 1 || v != std::floor(v))
            throw ConfigError("'" + path + "': bad axis size '" + tok + "'");
        dims.push_back(static_cast<int>(v));
    }
    if (space && space->dims() != dims)
        throw SpaceMismatchError("'" + path + "': dims do not match the expected space");

    DenseTensor out;
    out.space = space ? std::move(space)
                      : std::make_shared<const TensorSpace>(TensorSpace::uniform(dims));
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        out.values.push_back(parse_double(line, path));
    }
    if (out.values.size() != out.space->dense_size())
        throw ConfigError("'" + path + "': expected " +
                          std::to_string(out.space->dense_size()) + " values, found " +
                          std::to_string(out.values.size()));
    return out;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
    auto f = open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            f << (j ? "," : "") << format_double(m(i, j));
        f << "\n";
    }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
    auto f = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        for (const auto& tok : split_comma(line)) row.push_back(parse_double(tok, path));
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError("'" + path + "': ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("'" + path + "' is empty");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

void write_separated_json(const std::string& path, const SeparatedTensor& v) {
    json j;
    j["dims"] = v.space().dims();
    j["coeffs"] = v.coeffs();
    json factors = json::array();
    for (int i = 0; i < v.rank(); ++i) {
        json term = json::array();
        for (const auto& f : v.term(i).factors) term.push_back(f);
        factors.push_back(std::move(term));
    }
    j["factors"] = std::move(factors);
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

SeparatedTensor read_separated_json(const std::string& path, SpacePtr space) {
    if (!space) throw ConfigError("read_separated_json needs a space");
    json j;
    try {
        auto f = open_in(path);
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
    try {
        const auto dims = j.at("dims").get<std::vector<int>>();
        if (dims != space->dims())
            throw SpaceMismatchError("'" + path + "': dims do not match the expected space");
        const auto coeffs = j.at("coeffs").get<std::vector<double>>();
        const auto& factors = j.at("factors");
        if (factors.size() != coeffs.size())
            throw ConfigError("'" + path + "': coeffs and factors disagree on the rank");
        SeparatedTensor out(std::move(space));
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            RankOneTensor t;
            t.factors = factors[i].get<std::vector<std::vector<double>>>();
            out.append(coeffs[i], std::move(t));
        }
        return out;
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

void write_report_csv(const std::string& path, const ConvergenceReport& rep) {
    auto f = open_out(path);
    f << "m,symbol,J,J_decrease,z_norm,euler_residual,sigma,sweeps,wall_ms\n";
    for (const auto& r : rep.records) {
        f << r.m << "," << r.symbol << "," << format_double(r.J_value) << ","
          << format_double(r.J_decrease) << "," << format_double(r.z_norm) << ","
          << format_double(r.euler_residual) << ",";
        if (!std::isnan(r.sigma)) f << format_double(r.sigma);
        f << "," << r.sweeps << "," << format_double(r.wall_ms) << "\n";
    }
}

std::vector<IterationRecord> read_report_csv(const std::string& path) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("'" + path + "' is empty");
    if (split_comma(line) !=
        std::vector<std::string>{"m", "symbol", "J", "J_decrease", "z_norm",
                                 "euler_residual", "sigma", "sweeps", "wall_ms"})
        throw ConfigError("'" + path + "': unexpected header");
    std::vector<IterationRecord> out;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        const auto tok = split_comma(line);
        if (tok.size() != 9) throw ConfigError("'" + path + "': bad row '" + line + "'");
        IterationRecord r;
        r.m = static_cast<int>(parse_double(tok[0], path));
        if (tok[1].size() != 1) throw ConfigError("'" + path + "': bad symbol '" + tok[1] + "'");
        r.symbol = tok[1][0];
        r.J_value = parse_double(tok[2], path);
        r.J_decrease = parse_double(tok[3], path);
        r.z_norm = parse_double(tok[4], path);
        r.euler_residual = parse_double(tok[5], path);
        r.sigma = tok[6].empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : parse_double(tok[6], path);
        r.sweeps = static_cast<int>(parse_double(tok[7], path));
        r.wall_ms = parse_double(tok[8], path);
        out.push_back(r);
    }
    return out;
}

void write_summary_json(const std::string& path, const ConvergenceReport& rep) {
    json j;
    j["stop_reason"] = to_string(rep.stop_reason);
    j["J_zero"] = rep.J_zero;
    j["final_J"] = rep.final_J;
    j["sum_zs"] = rep.sum_zs;
    j["steps"] = rep.records.size();
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

std::string read_text_file(const std::string& path) {
    auto f = open_in(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace pgd::io
