#pragma once

// Brute-force reference for two-sided matching with strict, possibly partial
// lists: enumerate every matching of mutually listed pairs and keep the
// stable ones. Only meant for tiny instances.

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "matchlab/matching.hpp"
#include "matchlab/rng.hpp"

namespace brute {

using matchlab::AgentId;
using matchlab::PreferenceProfile;

using Assignment = std::map<AgentId, AgentId>;  // seeker -> counselor

inline int rank_in(const std::vector<AgentId>& list, AgentId id) {
    auto it = std::find(list.begin(), list.end(), id);
    return it == list.end() ? -1 : static_cast<int>(it - list.begin());
}

// Does `who` (with list `list`) strictly prefer `candidate` over `current`?
// Being alone is worse than any listed partner.
inline bool prefers(const std::vector<AgentId>& list, AgentId candidate,
                    std::optional<AgentId> current) {
    const int rc = rank_in(list, candidate);
    if (rc < 0) return false;
    if (!current) return true;
    return rc < rank_in(list, *current);
}

inline bool stable(const PreferenceProfile& prefs, const Assignment& m) {
    std::map<AgentId, AgentId> held;  // counselor -> seeker
    for (const auto& [s, c] : m) held[c] = s;
    for (const auto& [s, slist] : prefs.seeker_prefs) {
        std::optional<AgentId> ms;
        if (auto it = m.find(s); it != m.end()) ms = it->second;
        for (AgentId c : slist) {
            if (ms && *ms == c) continue;
            if (!prefers(slist, c, ms)) continue;
            auto cl = prefs.counselor_prefs.find(c);
            if (cl == prefs.counselor_prefs.end()) continue;
            std::optional<AgentId> mc;
            if (auto it = held.find(c); it != held.end()) mc = it->second;
            if (prefers(cl->second, s, mc)) return false;
        }
    }
    return true;
}

inline void extend(const PreferenceProfile& prefs, const std::vector<AgentId>& seekers,
                   std::size_t i, std::map<AgentId, bool>& used, Assignment& cur,
                   std::vector<Assignment>& out) {
    if (i == seekers.size()) {
        if (stable(prefs, cur)) out.push_back(cur);
        return;
    }
    const AgentId s = seekers[i];
    extend(prefs, seekers, i + 1, used, cur, out);
    for (AgentId c : prefs.seeker_prefs.at(s)) {
        if (used[c]) continue;
        auto cl = prefs.counselor_prefs.find(c);
        if (cl == prefs.counselor_prefs.end() || rank_in(cl->second, s) < 0) continue;
        used[c] = true;
        cur[s] = c;
        extend(prefs, seekers, i + 1, used, cur, out);
        cur.erase(s);
        used[c] = false;
    }
}

inline std::vector<Assignment> all_stable(const PreferenceProfile& prefs) {
    std::vector<AgentId> seekers;
    for (const auto& [s, _] : prefs.seeker_prefs) seekers.push_back(s);
    std::map<AgentId, bool> used;
    Assignment cur;
    std::vector<Assignment> out;
    extend(prefs, seekers, 0, used, cur, out);
    return out;
}

// The stable matching every seeker weakly prefers to all others, if it exists
// (it always should).
inline std::optional<Assignment> seeker_optimal(const PreferenceProfile& prefs) {
    const auto all = all_stable(prefs);
    for (const auto& cand : all) {
        bool best = true;
        for (const auto& other : all) {
            for (const auto& [s, slist] : prefs.seeker_prefs) {
                std::optional<AgentId> a, b;
                if (auto it = cand.find(s); it != cand.end()) a = it->second;
                if (auto it = other.find(s); it != other.end()) b = it->second;
                if (b && prefers(slist, *b, a)) best = false;
            }
            if (!best) break;
        }
        if (best) return cand;
    }
    return std::nullopt;
}

// Random instance with ids seekers 0..ns-1 and counselors 100..100+nc-1.
// Each agent lists each member of the other side with probability `density`.
inline PreferenceProfile random_profile(int ns, int nc, double density, matchlab::Rng& rng) {
    PreferenceProfile p;
    auto draw = [&](AgentId base, int n) {
        std::vector<AgentId> list;
        for (int k = 0; k < n; ++k) {
            if (rng.bernoulli(density)) list.push_back(base + k);
        }
        for (std::size_t k = list.size(); k > 1; --k) std::swap(list[k - 1], list[rng.below(k)]);
        return list;
    };
    for (int s = 0; s < ns; ++s) p.seeker_prefs[s] = draw(100, nc);
    for (int c = 0; c < nc; ++c) p.counselor_prefs[100 + c] = draw(0, ns);
    return p;
}

inline Assignment as_assignment(const matchlab::Matching& m) {
    Assignment a;
    for (const auto& [s, c] : m.pairs) a[s] = c;
    return a;
}

} // namespace brute
