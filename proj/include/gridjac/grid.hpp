#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridjac/errors.hpp"

namespace gridjac {

enum class BusKind { Slack, PV, PQ };

//! One network node. Injections are scheduled values in p.u., generation
//! positive. The node-to-ground shunt y_i = g_shunt + j*b_shunt stays on the
//! bus: it enters the injection and Jacobian formulas explicitly and is never
//! folded into the branch admittance matrix.
struct Bus {
    int id = 0;                 // 1-based external id
    BusKind kind = BusKind::PQ;
    double v_setpoint = 1.0;    // p.u., meaningful for Slack/PV
    double p = 0.0;             // scheduled active injection, p.u.
    double q = 0.0;             // scheduled reactive injection, p.u.
    double g_shunt = 0.0;
    double b_shunt = 0.0;

    bool operator==(const Bus&) const = default;
};

enum class BranchStatus { Closed, Open };

//! Series admittance Y = g + j*b between two buses.
struct Branch {
    int from = 0;
    int to = 0;
    double g = 0.0;
    double b = 0.0;
    BranchStatus status = BranchStatus::Closed;

    bool operator==(const Branch&) const = default;
};

struct Grid {
    double base_kv = 0.0;
    std::vector<Bus> buses;       // file order; defines all matrix orderings
    std::vector<Branch> branches; // branch id = 1-based position in this list

    bool operator==(const Grid&) const = default;

    int n() const { return static_cast<int>(buses.size()); }

    //! Position of a bus id in file order, or -1.
    int bus_index(int id) const {
        for (int i = 0; i < n(); ++i)
            if (buses[i].id == id) return i;
        return -1;
    }

    int slack_index() const {
        for (int i = 0; i < n(); ++i)
            if (buses[i].kind == BusKind::Slack) return i;
        return -1;
    }
};

//! Dense nodal admittance matrix in the papers' sign convention:
//! [y]_ij = Y_ij for a closed branch (i,j), and [y]_ii = -sum_{k!=i} Y_ik.
//! This is the negative of the textbook Ybus; the injection and Jacobian
//! formulas downstream are written against exactly this convention.
struct AdmittanceMatrix {
    int n = 0;
    Eigen::MatrixXcd entries;
};

//! True when every bus is reachable from every other over closed branches.
inline bool closed_graph_connected(const Grid& grid) {
    const int n = grid.n();
    if (n == 0) return false;
    if (n == 1) return true;
    std::vector<std::vector<int>> adj(n);
    for (const Branch& br : grid.branches) {
        if (br.status != BranchStatus::Closed) continue;
        int a = grid.bus_index(br.from);
        int b = grid.bus_index(br.to);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
    }
    return count == n;
}

inline AdmittanceMatrix build_admittance(const Grid& grid) {
    if (!closed_graph_connected(grid))
        throw ConnectivityError("closed-branch graph is not connected");
    const int n = grid.n();
    AdmittanceMatrix y;
    y.n = n;
    y.entries = Eigen::MatrixXcd::Zero(n, n);
    for (const Branch& br : grid.branches) {
        if (br.status != BranchStatus::Closed) continue;
        int a = grid.bus_index(br.from);
        int b = grid.bus_index(br.to);
        std::complex<double> v(br.g, br.b);
        y.entries(a, b) += v;
        y.entries(b, a) += v;
        y.entries(a, a) -= v;
        y.entries(b, b) -= v;
    }
    return y;
}

//! Flip the status of the listed branches (1-based ids into the branch list).
//! Pure: returns a new grid. Connectivity is not re-checked here; a toggle
//! that disconnects the grid surfaces as ConnectivityError at the next
//! build_admittance.
inline Grid apply_switch_plan(const Grid& grid, const std::vector<int>& toggles) {
    Grid out = grid;
    for (int id : toggles) {
        if (id < 1 || id > static_cast<int>(out.branches.size()))
            throw LookupError("no branch with id " + std::to_string(id));
        Branch& br = out.branches[id - 1];
        br.status = br.status == BranchStatus::Closed ? BranchStatus::Open
                                                      : BranchStatus::Closed;
    }
    return out;
}

} // namespace gridjac
