#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hypergt/matrix.hpp"

namespace hypergt {

// A hypergraph as node count, hyperedge count, and dense binary incidence
// matrix H (n x m, H[i][j] = 1 iff hyperedge j contains node i).
struct Hypergraph {
    int n = 0;
    int m = 0;
    Matrix incidence;

    Hypergraph() = default;
    Hypergraph(int n_, int m_) : n(n_), m(m_), incidence(n_, m_) {}
    explicit Hypergraph(Matrix h) : n(h.rows()), m(h.cols()), incidence(std::move(h)) {}

    int node_degree(int v) const;
    int hyperedge_size(int e) const;
    // Member node indices of hyperedge e, ascending.
    std::vector<int> hyperedge_members(int e) const;
    // Hyperedges containing node v, ascending.
    std::vector<int> incident_hyperedges(int v) const;
};

// Star expansion: instances 0..n-1 are nodes, n..n+m-1 are hyperedges.
// adjacency is the symmetric block matrix [[0, H], [H^T, 0]]; transition is
// the row-normalized adjacency with all-zero rows where the degree is zero.
struct StarExpansion {
    int n = 0;
    int m = 0;
    Matrix adjacency;
    std::vector<double> degrees;
    Matrix transition;
};

// Diagnostic pass; returns human-readable violations (empty means valid).
// Flags non-binary entries and empty hyperedges; duplicate hyperedges are
// allowed (co-sponsorship data contains near-duplicates).
std::vector<std::string> validate(const Hypergraph& hg);

// Throws std::invalid_argument listing violations if the hypergraph is invalid.
StarExpansion star_expand(const Hypergraph& hg);

// P_s rows: adjacency row / degree where degree > 0, all-zero otherwise.
Matrix transition_matrix(const Matrix& adjacency, const std::vector<double>& degrees);

// Extracts H back out of the top-right block of a star-expansion adjacency.
Matrix incidence_from_star(const StarExpansion& se);

// hMETIS-style text format. Line 1: "m n". Each following non-blank,
// non-comment ('%') line lists the 1-based node indices of one hyperedge.
Hypergraph load_hypergraph(const std::filesystem::path& path);
void save_hypergraph(const Hypergraph& hg, const std::filesystem::path& path);

}  // namespace hypergt
