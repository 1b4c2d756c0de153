// Dependency-tree algorithms and position features: per-token tree distances
// to the query entities, shortest-path extraction between their head tokens,
// on-path flags and signed sequence positions.
#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace relex {

struct Span {
    int start = 0;
    int end = 0; // half-open
    int len() const { return end - start; }
    bool contains(int i) const { return i >= start && i < end; }
    bool operator==(const Span& o) const { return start == o.start && end == o.end; }
};

struct DependencyTree {
    std::vector<int> head; // parent index per token, -1 marks the root
    int n() const { return static_cast<int>(head.size()); }
};

// Exactly one root, heads in range, every node reaches the root (connected
// and acyclic). Throws naming the first offending cycle otherwise.
inline void validate_tree(const DependencyTree& t) {
    int n = t.n();
    if (n == 0) throw std::runtime_error("dependency tree: empty");
    int roots = 0;
    for (int i = 0; i < n; ++i) {
        if (t.head[i] == -1) {
            ++roots;
        } else if (t.head[i] < 0 || t.head[i] >= n) {
            throw std::runtime_error("dependency tree: head index " +
                                     std::to_string(t.head[i]) + " of token " +
                                     std::to_string(i) + " out of range");
        }
    }
    if (roots != 1)
        throw std::runtime_error("dependency tree: expected exactly 1 root, found " +
                                 std::to_string(roots));
    // 0 unseen, 1 on current walk, 2 known good
    std::vector<char> state(n, 0);
    for (int i = 0; i < n; ++i) {
        if (state[i]) continue;
        std::vector<int> walk;
        int v = i;
        while (v != -1 && state[v] == 0) {
            state[v] = 1;
            walk.push_back(v);
            v = t.head[v];
        }
        if (v != -1 && state[v] == 1) {
            std::string cyc;
            bool in = false;
            for (int w : walk) {
                if (w == v) in = true;
                if (in) cyc += std::to_string(w) + "->";
            }
            cyc += std::to_string(v);
            throw std::runtime_error("dependency tree: head cycle " + cyc);
        }
        for (int w : walk) state[w] = 2;
    }
}

inline void check_span(const Span& s, int n, const char* what) {
    if (s.start < 0 || s.end > n || s.start >= s.end)
        throw std::runtime_error(std::string(what) + " span [" +
                                 std::to_string(s.start) + "," +
                                 std::to_string(s.end) + ") invalid for length " +
                                 std::to_string(n));
}

namespace detail {

inline std::vector<int> depths(const DependencyTree& t) {
    int n = t.n();
    std::vector<int> d(n, -1);
    for (int i = 0; i < n; ++i) {
        if (d[i] >= 0) continue;
        std::vector<int> chain;
        int v = i;
        while (v != -1 && d[v] < 0) {
            chain.push_back(v);
            v = t.head[v];
        }
        int base = (v == -1) ? -1 : d[v];
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) d[*it] = ++base;
    }
    return d;
}

inline int pairwise_distance(const DependencyTree& t, const std::vector<int>& depth,
                             int u, int v) {
    // ascend to equal depth, then in lockstep to the common ancestor
    int a = u, b = v;
    int da = depth[a], db = depth[b];
    int dist = 0;
    while (da > db) { a = t.head[a]; --da; ++dist; }
    while (db > da) { b = t.head[b]; --db; ++dist; }
    while (a != b) { a = t.head[a]; b = t.head[b]; dist += 2; }
    return dist;
}

} // namespace detail

// Span head token: the unique span token whose parent lies outside the span;
// if there are several such tokens or none, the last span token stands in.
inline int span_head_token(const DependencyTree& t, const Span& s) {
    check_span(s, t.n(), "entity");
    int found = -1;
    int count = 0;
    for (int i = s.start; i < s.end; ++i) {
        int h = t.head[i];
        if (h == -1 || !s.contains(h)) {
            found = i;
            ++count;
        }
    }
    return count == 1 ? found : s.end - 1;
}

enum class DistanceMode { min_over_span, head_based };

// Undirected edge-count distance from a token to an entity span: minimum
// over span tokens, or distance to the span head token in head_based mode.
inline int tree_distance(const DependencyTree& t, int token, const Span& span,
                         DistanceMode mode = DistanceMode::min_over_span) {
    validate_tree(t);
    check_span(span, t.n(), "entity");
    if (token < 0 || token >= t.n())
        throw std::runtime_error("tree_distance: token index out of range");
    auto depth = detail::depths(t);
    if (mode == DistanceMode::head_based)
        return detail::pairwise_distance(t, depth, token, span_head_token(t, span));
    int best = detail::pairwise_distance(t, depth, token, span.start);
    for (int i = span.start + 1; i < span.end; ++i)
        best = std::min(best, detail::pairwise_distance(t, depth, token, i));
    return best;
}

// Unique tree path between the two span head tokens, ordered subject→object.
// Identical heads give a length-1 path.
inline std::vector<int> shortest_dependency_path(const DependencyTree& t,
                                                 const Span& subj, const Span& obj) {
    validate_tree(t);
    int hs = span_head_token(t, subj);
    int ho = span_head_token(t, obj);
    if (hs == ho) return {hs};
    // ancestors of hs up to root, then climb from ho until we hit that chain
    std::vector<int> order(t.n(), -1);
    {
        int v = hs, k = 0;
        while (v != -1) {
            order[v] = k++;
            v = t.head[v];
        }
    }
    std::vector<int> up_from_obj;
    int v = ho;
    while (order[v] < 0) {
        up_from_obj.push_back(v);
        v = t.head[v];
    }
    int meet = v;
    std::vector<int> path;
    v = hs;
    while (v != meet) {
        path.push_back(v);
        v = t.head[v];
    }
    path.push_back(meet);
    for (auto it = up_from_obj.rbegin(); it != up_from_obj.rend(); ++it)
        path.push_back(*it);
    return path;
}

inline std::vector<int> on_path_flags(const std::vector<int>& path, int n) {
    std::vector<int> f(n, 0);
    for (int i : path) {
        if (i < 0 || i >= n) throw std::runtime_error("on_path_flags: path index out of range");
        f[i] = 1;
    }
    return f;
}

// Signed token offset relative to a span: 0 inside, negative before, positive
// after, clipped to +-max_pos.
inline std::vector<int> sequence_positions(int n, const Span& span, int max_pos = 50) {
    check_span(span, n, "entity");
    std::vector<int> p(n, 0);
    for (int i = 0; i < n; ++i) {
        int v = 0;
        if (i < span.start) v = i - span.start;
        else if (i >= span.end) v = i - span.end + 1;
        p[i] = std::clamp(v, -max_pos, max_pos);
    }
    return p;
}

struct LocalFeatures {
    std::vector<int> dist_subj;
    std::vector<int> dist_obj;
    std::vector<int> on_path;
    std::vector<int> pos_subj;
    std::vector<int> pos_obj;
};

inline LocalFeatures assemble_local_features(const DependencyTree& t, const Span& subj,
                                             const Span& obj, int max_pos = 50,
                                             DistanceMode mode = DistanceMode::min_over_span) {
    validate_tree(t);
    int n = t.n();
    check_span(subj, n, "subject");
    check_span(obj, n, "object");
    auto depth = detail::depths(t);
    auto dist_to = [&](const Span& s, int token) {
        if (mode == DistanceMode::head_based)
            return detail::pairwise_distance(t, depth, token, span_head_token(t, s));
        int best = detail::pairwise_distance(t, depth, token, s.start);
        for (int i = s.start + 1; i < s.end; ++i)
            best = std::min(best, detail::pairwise_distance(t, depth, token, i));
        return best;
    };
    LocalFeatures lf;
    lf.dist_subj.resize(n);
    lf.dist_obj.resize(n);
    for (int i = 0; i < n; ++i) {
        lf.dist_subj[i] = dist_to(subj, i);
        lf.dist_obj[i] = dist_to(obj, i);
    }
    lf.on_path = on_path_flags(shortest_dependency_path(t, subj, obj), n);
    lf.pos_subj = sequence_positions(n, subj, max_pos);
    lf.pos_obj = sequence_positions(n, obj, max_pos);
    return lf;
}

// Distance bucket for embedding lookup: one bucket per integer up to
// max_dist plus a shared overflow bucket (table height max_dist + 2).
inline int distance_bucket(int dist, int max_dist = 20) {
    return dist <= max_dist ? dist : max_dist + 1;
}

} // namespace relex

