#include "hypergt/hypergraph.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hypergt {

int Hypergraph::node_degree(int v) const {
    int d = 0;
    for (int j = 0; j < m; ++j) d += incidence(v, j) != 0.0 ? 1 : 0;
    return d;
}

int Hypergraph::hyperedge_size(int e) const {
    int s = 0;
    for (int i = 0; i < n; ++i) s += incidence(i, e) != 0.0 ? 1 : 0;
    return s;
}

std::vector<int> Hypergraph::hyperedge_members(int e) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (incidence(i, e) != 0.0) out.push_back(i);
    return out;
}

std::vector<int> Hypergraph::incident_hyperedges(int v) const {
    std::vector<int> out;
    for (int j = 0; j < m; ++j)
        if (incidence(v, j) != 0.0) out.push_back(j);
    return out;
}

std::vector<std::string> validate(const Hypergraph& hg) {
    std::vector<std::string> violations;
    if (hg.n < 1) violations.push_back("node count must be at least 1");
    if (hg.m < 0) violations.push_back("negative hyperedge count");
    if (hg.incidence.rows() != hg.n || hg.incidence.cols() != hg.m)
        violations.push_back("incidence shape " + hg.incidence.shape_str() + " does not match n=" +
                             std::to_string(hg.n) + ", m=" + std::to_string(hg.m));
    if (!violations.empty()) return violations;

    for (int i = 0; i < hg.n; ++i)
        for (int j = 0; j < hg.m; ++j) {
            const double v = hg.incidence(i, j);
            if (v != 0.0 && v != 1.0)
                violations.push_back("non-binary entry at (" + std::to_string(i) + "," +
                                     std::to_string(j) + ")");
        }
    for (int j = 0; j < hg.m; ++j)
        if (hg.hyperedge_size(j) == 0)
            violations.push_back("empty hyperedge at index " + std::to_string(j));
    return violations;
}

StarExpansion star_expand(const Hypergraph& hg) {
    const auto violations = validate(hg);
    if (!violations.empty()) {
        std::string msg = "star_expand: invalid hypergraph:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw std::invalid_argument(msg);
    }

    StarExpansion se;
    se.n = hg.n;
    se.m = hg.m;
    const int total = hg.n + hg.m;
    se.adjacency = Matrix(total, total);
    for (int i = 0; i < hg.n; ++i)
        for (int j = 0; j < hg.m; ++j) {
            const double v = hg.incidence(i, j);
            se.adjacency(i, hg.n + j) = v;
            se.adjacency(hg.n + j, i) = v;
        }
    se.degrees.assign(static_cast<size_t>(total), 0.0);
    for (int i = 0; i < total; ++i) {
        double d = 0.0;
        for (int j = 0; j < total; ++j) d += se.adjacency(i, j);
        se.degrees[static_cast<size_t>(i)] = d;
    }
    se.transition = transition_matrix(se.adjacency, se.degrees);
    return se;
}

Matrix transition_matrix(const Matrix& adjacency, const std::vector<double>& degrees) {
    if (adjacency.rows() != adjacency.cols() ||
        adjacency.rows() != static_cast<int>(degrees.size()))
        throw std::invalid_argument("transition_matrix: inconsistent inputs");
    Matrix p(adjacency.rows(), adjacency.cols());
    for (int i = 0; i < adjacency.rows(); ++i) {
        const double d = degrees[static_cast<size_t>(i)];
        if (d <= 0.0) continue;  // isolated instance keeps an all-zero row
        const double inv = 1.0 / d;
        for (int j = 0; j < adjacency.cols(); ++j) p(i, j) = adjacency(i, j) * inv;
    }
    return p;
}

Matrix incidence_from_star(const StarExpansion& se) {
    Matrix h(se.n, se.m);
    for (int i = 0; i < se.n; ++i)
        for (int j = 0; j < se.m; ++j) h(i, j) = se.adjacency(i, se.n + j);
    return h;
}

namespace {
[[noreturn]] void parse_error(const std::filesystem::path& path, int line_no,
                              const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}
}  // namespace

Hypergraph load_hypergraph(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open hypergraph file: " + path.string());

    std::string line;
    int line_no = 0;
    auto next_content_line = [&]() -> bool {
        while (std::getline(f, line)) {
            ++line_no;
            size_t pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos) continue;   // blank
            if (line[pos] == '%') continue;           // comment
            return true;
        }
        return false;
    };

    if (!next_content_line()) throw std::runtime_error(path.string() + ": empty hypergraph file");

    long m = 0;
    long n = 0;
    {
        std::istringstream iss(line);
        if (!(iss >> m >> n)) parse_error(path, line_no, "header must be \"m n\"");
        std::string extra;
        if (iss >> extra) parse_error(path, line_no, "unexpected token '" + extra + "' in header");
        if (n < 1) parse_error(path, line_no, "node count must be at least 1");
        if (m < 0) parse_error(path, line_no, "negative hyperedge count");
    }

    Hypergraph hg(static_cast<int>(n), static_cast<int>(m));
    for (int e = 0; e < m; ++e) {
        if (!next_content_line())
            throw std::runtime_error(path.string() + ": expected " + std::to_string(m) +
                                     " hyperedge lines, found " + std::to_string(e));
        std::istringstream iss(line);
        std::string tok;
        while (iss >> tok) {
            size_t used = 0;
            long v = 0;
            try {
                v = std::stol(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size()) parse_error(path, line_no, "non-integer token '" + tok + "'");
            if (v < 1 || v > n)
                parse_error(path, line_no, "node index " + std::to_string(v) +
                                               " out of range [1," + std::to_string(n) + "]");
            hg.incidence(static_cast<int>(v) - 1, e) = 1.0;
        }
    }
    return hg;
}

void save_hypergraph(const Hypergraph& hg, const std::filesystem::path& path) {
    const auto violations = validate(hg);
    if (!violations.empty())
        throw std::invalid_argument("save_hypergraph: invalid hypergraph: " + violations.front());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write hypergraph file: " + path.string());
    f << hg.m << " " << hg.n << "\n";
    for (int e = 0; e < hg.m; ++e) {
        bool first = true;
        for (int v : hg.hyperedge_members(e)) {
            if (!first) f << " ";
            f << (v + 1);
            first = false;
        }
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hypergt
