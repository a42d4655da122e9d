#pragma once

// Template grammars for desk-scale corpora. A grammar pairs source templates
// with logical-form templates; "$E" and "$F" are filled with entity tokens that
// appear verbatim on both sides, so they can be copied.
//
// Preset domains:
//   calendar, publications  share the logical-form grammar (near pair)
//   flights                 different grammar, shares only brackets and copying
//   alpha, beta             fully disjoint vocabularies (linearly separable)
//   arith                   prefix arithmetic, executable by tools/arith_executor

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "zshot/data/example.hpp"
#include "zshot/data/random.hpp"

namespace zshot::data {

struct Template {
  std::string source;
  std::string target;
};

struct DomainGrammar {
  std::string name;
  std::vector<Template> templates;
  std::vector<std::string> entities;   // fills $E
  std::vector<std::string> entities2;  // fills $F; empty means reuse `entities`
};

inline std::vector<std::string> split_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

namespace detail {

inline std::vector<std::string> fill(const std::string& tmpl, const std::string& e,
                                     const std::string& f) {
  auto toks = split_tokens(tmpl);
  for (auto& t : toks) {
    if (t == "$E") t = e;
    else if (t == "$F") t = f;
  }
  return toks;
}

}  // namespace detail

/// `n` examples drawn uniformly over templates and entities; ids are
/// "<name>-<first_index + i>".
inline std::vector<Example> generate(const DomainGrammar& g, int n, std::uint64_t seed,
                                     DomainRegistry& domains, int first_index = 0) {
  const TaskId dom = domains.add(g.name);
  auto rng = make_rng(seed, stable_hash(g.name));
  const auto& ents2 = g.entities2.empty() ? g.entities : g.entities2;
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& t = g.templates[uniform_below(rng, g.templates.size())];
    const auto& e = g.entities[uniform_below(rng, g.entities.size())];
    std::string f = ents2[uniform_below(rng, ents2.size())];
    Example ex;
    ex.id = g.name + "-" + std::to_string(first_index + i);
    ex.source = detail::fill(t.source, e, f);
    ex.target = detail::fill(t.target, e, f);
    ex.target.emplace_back(kEosToken);
    ex.domain = dom;
    out.push_back(std::move(ex));
  }
  return out;
}

/// Copies of `examples` relabelled as `domain_name`, ids suffixed with "-dup".
inline std::vector<Example> duplicate_as(const std::vector<Example>& examples,
                                         const std::string& domain_name, DomainRegistry& domains) {
  const TaskId dom = domains.add(domain_name);
  std::vector<Example> out = examples;
  for (auto& e : out) {
    e.id += "-dup";
    e.domain = dom;
  }
  return out;
}

namespace grammars {

inline DomainGrammar calendar() {
  return {"calendar",
          {{"show meetings on $E", "( list meeting ( date $E ) )"},
           {"meetings with $E", "( list meeting ( person $E ) )"},
           {"how many meetings on $E", "( count meeting ( date $E ) )"},
           {"how many meetings with $E", "( count meeting ( person $E ) )"},
           {"show meetings in $E", "( list meeting ( place $E ) )"},
           {"meetings with $E on $F", "( list meeting ( person $E ) ( date $F ) )"}},
          {"alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi"},
          {"monday", "tuesday", "wednesday", "thursday", "friday"}};
}

inline DomainGrammar publications() {
  return {"publications",
          {{"show articles on $E", "( list article ( date $E ) )"},
           {"articles with $E", "( list article ( person $E ) )"},
           {"how many articles on $E", "( count article ( date $E ) )"},
           {"how many articles with $E", "( count article ( person $E ) )"},
           {"show articles in $E", "( list article ( place $E ) )"},
           {"articles with $E on $F", "( list article ( person $E ) ( date $F ) )"}},
          {"smith", "jones", "lee", "kim", "chen", "garcia", "brown", "wilson"},
          {"y1999", "y2003", "y2008", "y2012", "y2017"}};
}

inline DomainGrammar flights() {
  return {"flights",
          {{"flights from $E to $F", "( lambda x ( and ( from x $E ) ( to x $F ) ) )"},
           {"fares from $E", "( lambda x ( fare x $E ) )"},
           {"airlines serving $E", "( lambda x ( serves x $E ) )"},
           {"cheapest flight to $F", "( argmin x ( to x $F ) fare )"}},
          {"boston", "denver", "dallas", "seattle", "atlanta", "miami"},
          {"chicago", "houston", "phoenix", "detroit", "orlando"}};
}

inline DomainGrammar alpha() {
  return {"alpha",
          {{"aa_show aa_red $E", "[ aa_get aa_red $E ]"},
           {"aa_count aa_blue $E", "[ aa_num aa_blue $E ]"},
           {"aa_show aa_blue $E", "[ aa_get aa_blue $E ]"}},
          {"aa_one", "aa_two", "aa_three", "aa_four", "aa_five"},
          {}};
}

inline DomainGrammar beta() {
  return {"beta",
          {{"bb_list bb_cats $E", "{ bb_all bb_cat $E }"},
           {"bb_find bb_dogs $E", "{ bb_any bb_dog $E }"},
           {"bb_list bb_dogs $E", "{ bb_all bb_dog $E }"}},
          {"bb_x", "bb_y", "bb_z", "bb_w", "bb_v"},
          {}};
}

inline DomainGrammar arith() {
  return {"arith",
          {{"add $E and $F", "( + $E $F )"},
           {"sum of $F and $E", "( + $F $E )"},
           {"multiply $E by $F", "( * $E $F )"},
           {"$E minus $F", "( - $E $F )"},
           {"double $E plus $F", "( + ( * 2 $E ) $F )"}},
          {"1", "2", "3", "4", "5", "6", "7", "8", "9"},
          {}};
}

inline std::vector<DomainGrammar> all() {
  return {calendar(), publications(), flights(), alpha(), beta(), arith()};
}

}  // namespace grammars

}  // namespace zshot::data
