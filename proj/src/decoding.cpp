#include "cmnt/decoding.hpp"

#include "cmnt/error.hpp"
#include "cmnt/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>

namespace cmnt {

namespace {

constexpr int kEos = Vocabulary::kEos;

struct Live {
  std::vector<int> tokens;
  double log_prob = 0.0;
  DecoderState state;
};

struct Candidate {
  const Live* parent;
  int token;
  double score;
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.parent != b.parent) return a.parent->tokens < b.parent->tokens;
  return a.token < b.token;
}

bool live_before(const Live& a, const Live& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

// Room for max_len search steps plus a forced completion of every constraint.
void check_args(const DecodeSession& session, int beam, int max_len, std::size_t forced) {
  if (beam < 1) throw Error("decode: beam width must be >= 1");
  if (max_len < 1) throw Error("decode: max_len must be >= 1");
  const auto limit = static_cast<std::size_t>(session.model().config().max_length);
  if (static_cast<std::size_t>(max_len) + forced > limit) {
    throw Error("decode: max_len " + std::to_string(max_len) + " plus " + std::to_string(forced) +
                " forced tokens exceeds the model's max_length " + std::to_string(limit));
  }
}

int last_fed(const Live& h) { return h.tokens.empty() ? Vocabulary::kBos : h.tokens.back(); }

Hypothesis to_hypothesis(const ConstraintSet& c, std::vector<int> tokens, double lp, bool finished) {
  Hypothesis h;
  h.coverage = c.satisfied(tokens);
  h.tokens = std::move(tokens);
  h.log_prob = lp;
  h.finished = finished;
  return h;
}

std::vector<int> with_token(const std::vector<int>& tokens, int tok) {
  std::vector<int> out;
  out.reserve(tokens.size() + 1);
  out = tokens;
  out.push_back(tok);
  return out;
}

// Longest suffix of `tokens` that is a proper prefix of `seq`.
int partial_cursor(const std::vector<int>& tokens, const std::vector<int>& seq) {
  const int n = static_cast<int>(seq.size());
  for (int len = std::min(n - 1, static_cast<int>(tokens.size())); len > 0; --len) {
    if (std::equal(seq.begin(), seq.begin() + len, tokens.end() - len)) return len;
  }
  return 0;
}

// Next token of every constraint not yet covered, continuing a partial match
// when one is in progress.
std::vector<int> constraint_continuations(const ConstraintSet& c, const std::vector<int>& tokens) {
  const auto done = c.satisfied(tokens);
  std::vector<int> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (done[i] || c[i].tokens.empty()) continue;
    const int cursor = partial_cursor(tokens, c[i].tokens);
    out.push_back(c[i].tokens[static_cast<std::size_t>(cursor)]);
    if (cursor > 0) out.push_back(c[i].tokens[0]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Finished-or-flagged result selection shared by every search.
Hypothesis pick_result(const ConstraintSet& c, std::vector<Hypothesis>& finished,
                       const std::vector<Live>& live) {
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), better);
  if (live.empty()) throw Error("decode: search produced no hypothesis");
  const Live& best = *std::min_element(live.begin(), live.end(), live_before);
  Hypothesis h = to_hypothesis(c, best.tokens, best.log_prob, false);
  h.flagged = true;
  return h;
}

// Appends the missing constraint tokens and eos to `start`, scoring every
// forced token with the model.
Hypothesis force_complete(const DecodeSession& session, const Live& start) {
  const ConstraintSet& c = session.constraints();
  Live h = start;
  auto feed = [&](int tok) {
    auto step = session.step(h.state, last_fed(h));
    h.log_prob += std::log(step.distribution[static_cast<std::size_t>(tok)]);
    h.state = std::move(step.state);
    h.tokens.push_back(tok);
  };
  const auto done = c.satisfied(h.tokens);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (done[i] || c.satisfied(h.tokens)[i]) continue;
    const int cursor = partial_cursor(h.tokens, c[i].tokens);
    for (std::size_t k = static_cast<std::size_t>(cursor); k < c[i].tokens.size(); ++k) feed(c[i].tokens[k]);
  }
  feed(kEos);
  Hypothesis out = to_hypothesis(c, h.tokens, h.log_prob, true);
  out.flagged = true;
  return out;
}

double log_of(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

// Expands one hypothesis; distribution is cached for reuse by the caller.
struct Expanded {
  const Live* parent;
  std::vector<double> logp;
  DecoderState state;
};

std::vector<Expanded> expand_all(const DecodeSession& session, const std::vector<Live>& live) {
  std::vector<Expanded> out;
  out.reserve(live.size());
  for (const Live& h : live) {
    auto step = session.step(h.state, last_fed(h));
    Expanded e{&h, {}, std::move(step.state)};
    e.logp.resize(step.distribution.size());
    for (std::size_t v = 0; v < step.distribution.size(); ++v) e.logp[v] = log_of(step.distribution[v]);
    out.push_back(std::move(e));
  }
  return out;
}

Live child_of(const Expanded& e, int tok) {
  Live h;
  h.tokens = with_token(e.parent->tokens, tok);
  h.log_prob = e.parent->log_prob + e.logp[static_cast<std::size_t>(tok)];
  h.state = e.state;
  return h;
}

double best_finished(const std::vector<Hypothesis>& finished) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& h : finished) best = std::max(best, h.log_prob);
  return best;
}

double best_live(const std::vector<Live>& live) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& h : live) best = std::max(best, h.log_prob);
  return best;
}

const Expanded& owner(const std::vector<Expanded>& ex, const Live* parent) {
  for (const auto& e : ex)
    if (e.parent == parent) return e;
  throw Error("decode: internal candidate bookkeeping error");
}

// Top `k` emittable tokens of one expansion, by (score, token id).
std::vector<int> top_tokens(const Expanded& e, const std::vector<int>& allowed, std::size_t k, bool allow_eos) {
  std::vector<int> toks;
  for (int v : allowed) {
    if (v == kEos && !allow_eos) continue;
    if (std::isinf(e.logp[static_cast<std::size_t>(v)])) continue;
    toks.push_back(v);
  }
  const auto cmp = [&](int a, int b) {
    const double sa = e.logp[static_cast<std::size_t>(a)], sb = e.logp[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  };
  if (toks.size() > k) {
    std::partial_sort(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(k), toks.end(), cmp);
    toks.resize(k);
  } else {
    std::sort(toks.begin(), toks.end(), cmp);
  }
  return toks;
}

}  // namespace

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

std::vector<int> emittable_tokens(int vocab_size) {
  std::vector<int> out;
  for (int v = 0; v < vocab_size; ++v) {
    if (v != Vocabulary::kPad && v != Vocabulary::kBos) out.push_back(v);
  }
  return out;
}

int coverage_count(const ConstraintSet& c, const std::vector<int>& tokens) {
  const auto done = c.satisfied(tokens);
  int k = 0;
  int partial = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (done[i]) k += static_cast<int>(c[i].tokens.size());
    else partial = std::max(partial, partial_cursor(tokens, c[i].tokens));
  }
  return k + partial;
}

Hypothesis beam_search(const DecodeSession& session, int beam, int max_len) {
  check_args(session, beam, max_len, 0);
  const auto allowed = emittable_tokens(session.vocab_size());
  std::vector<Live> live(1);
  live[0].state = session.initial_state();
  std::vector<Hypothesis> finished;
  for (int t = 1; t <= max_len && !live.empty(); ++t) {
    const auto ex = expand_all(session, live);
    std::vector<Candidate> cands;
    for (const auto& e : ex) {
      for (int v : top_tokens(e, allowed, static_cast<std::size_t>(beam), true)) {
        cands.push_back({e.parent, v, e.parent->log_prob + e.logp[static_cast<std::size_t>(v)]});
      }
    }
    const auto keep = std::min(cands.size(), static_cast<std::size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), candidate_before);
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& e = owner(ex, cands[i].parent);
      Live child = child_of(e, cands[i].token);
      if (cands[i].token == kEos) {
        finished.push_back(to_hypothesis(session.constraints(), std::move(child.tokens), child.log_prob, true));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
    // extensions never raise a score, so a strictly better finished result is final
    if (!finished.empty() && best_finished(finished) > best_live(live)) break;
  }
  return pick_result(session.constraints(), finished, live);
}

namespace {

// Shared by the two constrained searches: eos only once every constraint is
// covered, fallback completion when nothing finished.
Hypothesis finish_constrained(const DecodeSession& session, std::vector<Hypothesis>& finished,
                              const std::vector<Live>& live) {
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), better);
  if (live.empty()) throw Error("decode: search produced no hypothesis");
  const ConstraintSet& c = session.constraints();
  if (c.empty()) return pick_result(c, finished, live);
  const Live* best = nullptr;
  int best_k = -1;
  for (const auto& h : live) {
    const int k = coverage_count(c, h.tokens);
    if (k > best_k || (k == best_k && live_before(h, *best))) {
      best = &h;
      best_k = k;
    }
  }
  return force_complete(session, *best);
}

}  // namespace

Hypothesis grid_beam_search(const DecodeSession& session, int beam, int max_len) {
  const ConstraintSet& c = session.constraints();
  const int C = static_cast<int>(c.total_tokens());
  check_args(session, beam, max_len, c.empty() ? 0 : c.total_tokens() + 1);
  const auto allowed = emittable_tokens(session.vocab_size());
  std::vector<std::vector<Live>> grid(static_cast<std::size_t>(C + 1));
  grid[0].emplace_back();
  grid[0][0].state = session.initial_state();
  std::vector<Hypothesis> finished;
  std::vector<Live> last_live;

  for (int t = 1; t <= max_len; ++t) {
    std::vector<std::vector<Candidate>> cells(static_cast<std::size_t>(C + 1));
    std::vector<std::vector<Expanded>> ex(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      ex[k] = expand_all(session, grid[k]);
      for (const auto& e : ex[k]) {
        const bool covered = c.all_satisfied(e.parent->tokens);
        auto toks = top_tokens(e, allowed, static_cast<std::size_t>(beam), covered);
        for (int v : constraint_continuations(c, e.parent->tokens)) {
          if (std::find(toks.begin(), toks.end(), v) == toks.end() && !std::isinf(e.logp[static_cast<std::size_t>(v)])) {
            toks.push_back(v);
          }
        }
        for (int v : toks) {
          const int nk = v == kEos ? C : coverage_count(c, with_token(e.parent->tokens, v));
          cells[static_cast<std::size_t>(nk)].push_back({e.parent, v, e.parent->log_prob + e.logp[static_cast<std::size_t>(v)]});
        }
      }
    }
    std::unordered_map<const Live*, const Expanded*> by_parent;
    for (const auto& cell_ex : ex)
      for (const auto& x : cell_ex) by_parent.emplace(x.parent, &x);
    std::vector<std::vector<Live>> next(grid.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      auto& cand = cells[k];
      const auto keep = std::min(cand.size(), static_cast<std::size_t>(beam));
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), candidate_before);
      for (std::size_t i = 0; i < keep; ++i) {
        Live child = child_of(*by_parent.at(cand[i].parent), cand[i].token);
        if (cand[i].token == kEos) {
          finished.push_back(to_hypothesis(c, std::move(child.tokens), child.log_prob, true));
        } else {
          next[k].push_back(std::move(child));
        }
      }
    }
    grid = std::move(next);
    double live_best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& cell : grid) {
      if (!cell.empty()) any = true;
      live_best = std::max(live_best, best_live(cell));
    }
    if (!any) break;
    if (!finished.empty() && best_finished(finished) > live_best) break;
  }
  for (auto& cell : grid)
    for (auto& h : cell) last_live.push_back(std::move(h));
  return finish_constrained(session, finished, last_live);
}

Hypothesis dba_search(const DecodeSession& session, int beam, int max_len) {
  const ConstraintSet& c = session.constraints();
  const int C = static_cast<int>(c.total_tokens());
  check_args(session, beam, max_len, c.empty() ? 0 : c.total_tokens() + 1);
  const auto allowed = emittable_tokens(session.vocab_size());
  std::vector<Live> live(1);
  live[0].state = session.initial_state();
  std::vector<Hypothesis> finished;

  for (int t = 1; t <= max_len && !live.empty(); ++t) {
    const auto ex = expand_all(session, live);
    // global top-k, per-hypothesis constraint continuations and per-hypothesis best
    std::vector<Candidate> all;
    for (const auto& e : ex) {
      const bool covered = c.all_satisfied(e.parent->tokens);
      auto toks = top_tokens(e, allowed, static_cast<std::size_t>(beam), covered);
      for (int v : toks) all.push_back({e.parent, v, e.parent->log_prob + e.logp[static_cast<std::size_t>(v)]});
    }
    const auto global_keep = std::min(all.size(), static_cast<std::size_t>(beam));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(global_keep), all.end(), candidate_before);
    std::vector<Candidate> pool(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(global_keep));
    auto add = [&](const Expanded& e, int v) {
      if (std::isinf(e.logp[static_cast<std::size_t>(v)])) return;
      for (const auto& p : pool)
        if (p.parent == e.parent && p.token == v) return;
      pool.push_back({e.parent, v, e.parent->log_prob + e.logp[static_cast<std::size_t>(v)]});
    };
    for (const auto& e : ex) {
      for (int v : constraint_continuations(c, e.parent->tokens)) add(e, v);
      const bool covered = c.all_satisfied(e.parent->tokens);
      const auto best = top_tokens(e, allowed, 1, covered);
      if (!best.empty()) add(e, best[0]);
    }

    std::vector<std::vector<Candidate>> banks(static_cast<std::size_t>(C + 1));
    for (const auto& cand : pool) {
      const int k = cand.token == kEos ? C : coverage_count(c, with_token(cand.parent->tokens, cand.token));
      banks[static_cast<std::size_t>(k)].push_back(cand);
    }
    for (auto& b : banks) std::sort(b.begin(), b.end(), candidate_before);

    // base allocation, remainder to the fully covered bank, then unused
    // slots flow to banks with spare candidates, highest coverage first
    std::vector<std::size_t> alloc(banks.size(), static_cast<std::size_t>(beam / (C + 1)));
    alloc.back() += static_cast<std::size_t>(beam - (beam / (C + 1)) * (C + 1));
    std::size_t spare = 0;
    for (std::size_t k = 0; k < banks.size(); ++k) {
      if (banks[k].size() < alloc[k]) {
        spare += alloc[k] - banks[k].size();
        alloc[k] = banks[k].size();
      }
    }
    for (std::size_t k = banks.size(); k-- > 0 && spare > 0;) {
      const std::size_t extra = std::min(spare, banks[k].size() - alloc[k]);
      alloc[k] += extra;
      spare -= extra;
    }

    std::vector<Live> next;
    for (std::size_t k = 0; k < banks.size(); ++k) {
      for (std::size_t i = 0; i < alloc[k]; ++i) {
        const auto& cand = banks[k][i];
        Live child = child_of(owner(ex, cand.parent), cand.token);
        if (cand.token == kEos) {
          finished.push_back(to_hypothesis(c, std::move(child.tokens), child.log_prob, true));
        } else {
          next.push_back(std::move(child));
        }
      }
    }
    live = std::move(next);
    if (t == max_len) break;
    if (!finished.empty() && best_finished(finished) > best_live(live)) break;
  }
  return finish_constrained(session, finished, live);
}

Hypothesis exhaustive_oracle(const DecodeSession& session, int max_len, bool require_coverage) {
  if (max_len < 1) throw Error("exhaustive_oracle: max_len must be >= 1");
  if (max_len > session.model().config().max_length) throw Error("exhaustive_oracle: max_len exceeds the model's max_length");
  const auto allowed = emittable_tokens(session.vocab_size());
  const double space = std::pow(static_cast<double>(allowed.size()), max_len);
  if (space > 1e6) {
    throw Error("exhaustive_oracle: search space " + std::to_string(static_cast<long long>(space)) +
                " exceeds 1e6 sequences");
  }
  const ConstraintSet& c = session.constraints();
  std::unique_ptr<Hypothesis> best;
  Live root;
  root.state = session.initial_state();

  auto dfs = [&](auto&& self, const Live& h) -> void {
    auto step = session.step(h.state, last_fed(h));
    for (int v : allowed) {
      const double lp = h.log_prob + log_of(step.distribution[static_cast<std::size_t>(v)]);
      if (std::isinf(lp)) continue;
      auto toks = with_token(h.tokens, v);
      if (v == kEos) {
        if (require_coverage && !c.all_satisfied(toks)) continue;
        Hypothesis cand = to_hypothesis(c, std::move(toks), lp, true);
        if (!best || better(cand, *best)) best = std::make_unique<Hypothesis>(std::move(cand));
      } else if (static_cast<int>(toks.size()) < max_len) {
        Live child{std::move(toks), lp, step.state};
        self(self, child);
      }
    }
  };
  dfs(dfs, root);
  if (!best) throw Error("exhaustive_oracle: no sequence satisfies the coverage filter");
  return *best;
}

}  // namespace cmnt
