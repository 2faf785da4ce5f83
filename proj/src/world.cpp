#include "synmrc/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"

namespace synmrc {

namespace {

std::string numbered(const char* prefix, int i, int width = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

std::string type_token(int type) { return numbered("type", type, 1); }

constexpr int kTemplateForms = 6;

void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

const Document& World::document(std::string_view doc_id) const {
  for (const auto& d : documents) {
    if (d.doc_id == doc_id) return d;
  }
  throw InputError("unknown document: " + std::string(doc_id));
}

RenderedQuestion render_question(const World& world, const Fact& fact, int template_index) {
  const Entity& s = world.entities.at(fact.subject);
  const Entity& o = world.entities.at(fact.object);
  const Relation& r = world.relations.at(fact.relation);
  RenderedQuestion q;
  switch (template_index) {
    case 0:
      q.tokens = {"what", "does"};
      append(q.tokens, s.name);
      q.tokens.push_back(r.verb);
      break;
    case 1:
      q.tokens = {"which", type_token(o.type), "did"};
      append(q.tokens, s.name);
      q.tokens.push_back(r.synonym);
      break;
    case 2:
      q.tokens = {"which", type_token(s.type), r.verb};
      append(q.tokens, o.name);
      q.asks = AskedRole::subject;
      break;
    case 3:
      q.tokens = s.name;
      q.tokens.push_back(r.synonym);
      q.tokens.push_back("what");
      break;
    case 4:
      q.tokens = {"who", "did", r.synonym};
      append(q.tokens, o.name);
      q.asks = AskedRole::subject;
      break;
    case 5:
      q.tokens = {"what", "did"};
      append(q.tokens, s.name);
      q.tokens.push_back(r.verb);
      break;
    default:
      throw InputError("unknown question template " + std::to_string(template_index));
  }
  q.tokens.push_back("?");
  return q;
}

void validate(const WorldConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.n_entities >= 2, "n_entities must be >= 2");
  require(c.n_relations >= 1, "n_relations must be >= 1");
  require(c.n_types >= 1, "n_types must be >= 1");
  require(c.n_modifiers >= 0 && c.n_fillers >= 1, "need at least one filler token");
  require(c.n_documents >= 1, "n_documents must be >= 1");
  require(c.n_unlabeled_documents >= 0, "n_unlabeled_documents must be >= 0");
  require(c.paragraphs_per_document >= 2, "paragraphs_per_document must be >= 2");
  require(c.entities_per_document >= 2 && c.entities_per_document <= c.n_entities,
          "entities_per_document must lie in [2, n_entities]");
  require(c.min_facts_per_paragraph >= 1 && c.min_facts_per_paragraph <= c.max_facts_per_paragraph,
          "fact-per-paragraph bounds invalid");
  require(c.min_paragraph_length >= 1 && c.min_paragraph_length <= c.max_paragraph_length,
          "paragraph length bounds invalid");
  // A single fact sentence is at most 3 + 1 + 3 + 2 + 1 tokens.
  require(c.max_paragraph_length >= 10, "max_paragraph_length must be >= 10");
  require(c.templates_per_relation >= 1 && c.templates_per_relation <= kTemplateForms,
          "templates_per_relation must lie in [1, 6]");
}

namespace {

class WorldBuilder {
 public:
  WorldBuilder(const WorldConfig& config, std::uint64_t seed)
      : rng_(derive_seed(seed, "world")) {
    world_.config = config;
    world_.seed = seed;
  }

  World build() {
    make_lexicon();
    const int total = world_.config.n_documents + world_.config.n_unlabeled_documents;
    for (int d = 0; d < total; ++d) make_document(d, d >= world_.config.n_documents);
    return std::move(world_);
  }

 private:
  void make_lexicon() {
    const WorldConfig& c = world_.config;
    auto& vocab = world_.vocabulary;
    vocab = {std::string(Vocabulary::cls_token), std::string(Vocabulary::sep_token),
             ".", "?", "what", "which", "who", "does", "did"};
    for (int t = 0; t < c.n_types; ++t) vocab.push_back(type_token(t));
    std::vector<std::string> modifiers;
    for (int m = 0; m < c.n_modifiers; ++m) modifiers.push_back(numbered("m", m, 2));
    for (int f = 0; f < c.n_fillers; ++f) fillers_.push_back(numbered("w", f));
    append(vocab, modifiers);
    append(vocab, fillers_);

    for (int e = 0; e < c.n_entities; ++e) {
      Entity ent;
      ent.id = numbered("e", e);
      ent.type = static_cast<int>(rng_.below(static_cast<std::size_t>(c.n_types)));
      const int n_mod = modifiers.empty() ? 0 : static_cast<int>(rng_.below(3));
      for (int k = 0; k < n_mod; ++k) ent.name.push_back(modifiers[rng_.below(modifiers.size())]);
      ent.name.push_back(ent.id);
      vocab.push_back(ent.id);
      world_.entities.push_back(std::move(ent));
    }

    double total = 0.0;
    for (int r = 0; r < c.n_relations; ++r) total += 1.0 / (r + 1);
    for (int r = 0; r < c.n_relations; ++r) {
      Relation rel;
      rel.id = numbered("rel", r, 2);
      rel.verb = numbered("r", r, 2);
      rel.synonym = numbered("q", r, 2);
      rel.subject_type = static_cast<int>(rng_.below(static_cast<std::size_t>(c.n_types)));
      rel.object_type = static_cast<int>(rng_.below(static_cast<std::size_t>(c.n_types)));
      rel.frequency = (1.0 / (r + 1)) / total;  // Zipfian
      vocab.push_back(rel.verb);
      vocab.push_back(rel.synonym);
      world_.relations.push_back(std::move(rel));
    }
  }

  int sample_relation() {
    double u = rng_.uniform();
    for (std::size_t r = 0; r < world_.relations.size(); ++r) {
      u -= world_.relations[r].frequency;
      if (u < 0) return static_cast<int>(r);
    }
    return static_cast<int>(world_.relations.size()) - 1;
  }

  Tokens fillers(int n) {
    Tokens out;
    for (int i = 0; i < n; ++i) out.push_back(fillers_[rng_.below(fillers_.size())]);
    return out;
  }

  // Draws one new fact among the document's entities, or nothing when the
  // retry budget runs out.
  std::optional<int> draw_fact(const std::vector<int>& doc_entities,
                               std::set<std::pair<int, int>>& used_sr,
                               std::set<std::pair<int, int>>& used_ro) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int r = sample_relation();
      const Relation& rel = world_.relations[static_cast<std::size_t>(r)];
      std::vector<int> subjects, objects;
      for (int e : doc_entities) {
        if (world_.entities[static_cast<std::size_t>(e)].type == rel.subject_type) subjects.push_back(e);
        if (world_.entities[static_cast<std::size_t>(e)].type == rel.object_type) objects.push_back(e);
      }
      if (subjects.empty() || objects.empty()) continue;
      const int s = subjects[rng_.below(subjects.size())];
      const int o = objects[rng_.below(objects.size())];
      if (s == o || used_sr.contains({s, r}) || used_ro.contains({r, o})) continue;
      const Fact fact{s, r, o};
      if (fact_index_.contains(fact)) continue;
      used_sr.insert({s, r});
      used_ro.insert({r, o});
      const int index = static_cast<int>(world_.facts.size());
      world_.facts.push_back(fact);
      fact_index_.emplace(fact, index);
      return index;
    }
    return std::nullopt;
  }

  Sentence fact_sentence(int fact_index, int offset, Tokens& out) {
    const Fact& f = world_.facts[static_cast<std::size_t>(fact_index)];
    const Tokens& sname = world_.entities[static_cast<std::size_t>(f.subject)].name;
    const Tokens& oname = world_.entities[static_cast<std::size_t>(f.object)].name;
    Sentence s;
    s.fact = fact_index;
    const int begin = offset + static_cast<int>(out.size());
    append(out, sname);
    s.subject = {begin, begin + static_cast<int>(sname.size())};
    out.push_back(world_.relations[static_cast<std::size_t>(f.relation)].verb);
    const int obj = offset + static_cast<int>(out.size());
    append(out, oname);
    s.object = {obj, obj + static_cast<int>(oname.size())};
    append(out, fillers(static_cast<int>(rng_.below(3))));
    out.push_back(".");
    s.span = {begin, offset + static_cast<int>(out.size())};
    return s;
  }

  Sentence filler_sentence(const std::vector<int>& doc_entities, int offset, Tokens& out) {
    Sentence s;
    const int begin = offset + static_cast<int>(out.size());
    if (rng_.bernoulli(0.5)) {
      append(out, world_.entities[static_cast<std::size_t>(doc_entities[rng_.below(doc_entities.size())])].name);
    }
    append(out, fillers(2 + static_cast<int>(rng_.below(4))));
    out.push_back(".");
    s.span = {begin, offset + static_cast<int>(out.size())};
    return s;
  }

  void make_document(int index, bool unlabeled) {
    const WorldConfig& c = world_.config;
    Document doc;
    doc.doc_id = numbered("d", index, 4);
    doc.unlabeled = unlabeled;

    std::vector<int> doc_entities;
    for (std::size_t i : rng_.sample_without_replacement(static_cast<std::size_t>(c.n_entities),
                                                         static_cast<std::size_t>(c.entities_per_document))) {
      doc_entities.push_back(static_cast<int>(i));
    }
    std::set<std::pair<int, int>> used_sr, used_ro;

    for (int p = 0; p < c.paragraphs_per_document; ++p) {
      const int span = c.max_facts_per_paragraph - c.min_facts_per_paragraph + 1;
      const int n_facts = c.min_facts_per_paragraph + static_cast<int>(rng_.below(static_cast<std::size_t>(span)));

      // Sentences are built as separate token runs, then laid out in a
      // random order with fillers interleaved.
      std::vector<std::pair<Tokens, Sentence>> pieces;
      int length = 0;
      for (int k = 0; k < n_facts; ++k) {
        const auto fact = draw_fact(doc_entities, used_sr, used_ro);
        if (!fact) break;
        Tokens toks;
        Sentence s = fact_sentence(*fact, 0, toks);
        if (length + static_cast<int>(toks.size()) > c.max_paragraph_length) {
          // Roll back: the fact stays out of the world.
          const Fact& f = world_.facts.back();
          used_sr.erase({f.subject, f.relation});
          used_ro.erase({f.relation, f.object});
          fact_index_.erase(f);
          world_.facts.pop_back();
          break;
        }
        length += static_cast<int>(toks.size());
        pieces.emplace_back(std::move(toks), s);
      }
      while (length < c.min_paragraph_length || (pieces.size() < 6 && rng_.bernoulli(0.3))) {
        Tokens toks;
        Sentence s = filler_sentence(doc_entities, 0, toks);
        if (length + static_cast<int>(toks.size()) > c.max_paragraph_length) {
          if (length >= c.min_paragraph_length) break;
          toks.resize(static_cast<std::size_t>(std::max(1, c.max_paragraph_length - length)));
          toks.back() = ".";
          s.span = {0, static_cast<int>(toks.size())};
        }
        length += static_cast<int>(toks.size());
        pieces.emplace_back(std::move(toks), s);
      }
      rng_.shuffle(pieces);

      Paragraph para;
      for (auto& [toks, s] : pieces) {
        const int offset = static_cast<int>(para.tokens.size());
        auto shift = [offset](Span& sp) {
          sp.start += offset;
          sp.end += offset;
        };
        shift(s.span);
        if (s.fact) {
          shift(s.subject);
          shift(s.object);
        }
        append(para.tokens, toks);
        para.sentences.push_back(s);
      }
      doc.paragraphs.push_back(std::move(para));
    }
    world_.documents.push_back(std::move(doc));
  }

  World world_;
  Rng rng_;
  std::vector<std::string> fillers_;
  std::map<Fact, int> fact_index_;
};

}  // namespace

World build_world(const WorldConfig& config, std::uint64_t seed) {
  validate(config);
  return WorldBuilder(config, seed).build();
}

// ----------------------------- serialization -----------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json span_json(const Span& s) { return ordered_json::array({s.start, s.end}); }
Span span_from(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

std::string world_to_json(const World& w) {
  const WorldConfig& c = w.config;
  ordered_json j;
  j["format"] = "synmrc-world";
  j["version"] = 1;
  j["seed"] = w.seed;
  j["config"] = {{"n_entities", c.n_entities},
                 {"n_relations", c.n_relations},
                 {"n_types", c.n_types},
                 {"n_modifiers", c.n_modifiers},
                 {"n_fillers", c.n_fillers},
                 {"n_documents", c.n_documents},
                 {"n_unlabeled_documents", c.n_unlabeled_documents},
                 {"paragraphs_per_document", c.paragraphs_per_document},
                 {"entities_per_document", c.entities_per_document},
                 {"min_facts_per_paragraph", c.min_facts_per_paragraph},
                 {"max_facts_per_paragraph", c.max_facts_per_paragraph},
                 {"min_paragraph_length", c.min_paragraph_length},
                 {"max_paragraph_length", c.max_paragraph_length},
                 {"templates_per_relation", c.templates_per_relation}};
  j["vocabulary"] = w.vocabulary;
  auto& ents = j["entities"] = ordered_json::array();
  for (const auto& e : w.entities) ents.push_back({{"id", e.id}, {"name", e.name}, {"type", e.type}});
  auto& rels = j["relations"] = ordered_json::array();
  for (const auto& r : w.relations) {
    rels.push_back({{"id", r.id},
                    {"verb", r.verb},
                    {"synonym", r.synonym},
                    {"subject_type", r.subject_type},
                    {"object_type", r.object_type},
                    {"frequency", r.frequency}});
  }
  auto& facts = j["facts"] = ordered_json::array();
  for (const auto& f : w.facts) facts.push_back({f.subject, f.relation, f.object});
  auto& docs = j["documents"] = ordered_json::array();
  for (const auto& d : w.documents) {
    ordered_json dj;
    dj["doc_id"] = d.doc_id;
    dj["unlabeled"] = d.unlabeled;
    auto& paras = dj["paragraphs"] = ordered_json::array();
    for (const auto& p : d.paragraphs) {
      ordered_json pj;
      pj["tokens"] = p.tokens;
      auto& sents = pj["sentences"] = ordered_json::array();
      for (const auto& s : p.sentences) {
        ordered_json sj;
        sj["span"] = span_json(s.span);
        if (s.fact) {
          sj["fact"] = *s.fact;
          sj["subject"] = span_json(s.subject);
          sj["object"] = span_json(s.object);
        }
        sents.push_back(std::move(sj));
      }
      paras.push_back(std::move(pj));
    }
    docs.push_back(std::move(dj));
  }
  return j.dump();
}

World world_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "synmrc-world") throw InputError("not a synmrc world file");
  World w;
  w.seed = j.at("seed").get<std::uint64_t>();
  const auto& c = j.at("config");
  WorldConfig& cfg = w.config;
  cfg.n_entities = c.at("n_entities");
  cfg.n_relations = c.at("n_relations");
  cfg.n_types = c.at("n_types");
  cfg.n_modifiers = c.at("n_modifiers");
  cfg.n_fillers = c.at("n_fillers");
  cfg.n_documents = c.at("n_documents");
  cfg.n_unlabeled_documents = c.at("n_unlabeled_documents");
  cfg.paragraphs_per_document = c.at("paragraphs_per_document");
  cfg.entities_per_document = c.at("entities_per_document");
  cfg.min_facts_per_paragraph = c.at("min_facts_per_paragraph");
  cfg.max_facts_per_paragraph = c.at("max_facts_per_paragraph");
  cfg.min_paragraph_length = c.at("min_paragraph_length");
  cfg.max_paragraph_length = c.at("max_paragraph_length");
  cfg.templates_per_relation = c.at("templates_per_relation");
  w.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  for (const auto& e : j.at("entities")) {
    w.entities.push_back({e.at("id").get<std::string>(), e.at("name").get<Tokens>(), e.at("type").get<int>()});
  }
  for (const auto& r : j.at("relations")) {
    w.relations.push_back({r.at("id").get<std::string>(), r.at("verb").get<std::string>(),
                           r.at("synonym").get<std::string>(), r.at("subject_type").get<int>(),
                           r.at("object_type").get<int>(), r.at("frequency").get<double>()});
  }
  for (const auto& f : j.at("facts")) w.facts.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
  for (const auto& dj : j.at("documents")) {
    Document d;
    d.doc_id = dj.at("doc_id").get<std::string>();
    d.unlabeled = dj.at("unlabeled").get<bool>();
    for (const auto& pj : dj.at("paragraphs")) {
      Paragraph p;
      p.tokens = pj.at("tokens").get<Tokens>();
      for (const auto& sj : pj.at("sentences")) {
        Sentence s;
        s.span = span_from(sj.at("span"));
        if (sj.contains("fact")) {
          s.fact = sj["fact"].get<int>();
          s.subject = span_from(sj.at("subject"));
          s.object = span_from(sj.at("object"));
        }
        p.sentences.push_back(s);
      }
      d.paragraphs.push_back(std::move(p));
    }
    w.documents.push_back(std::move(d));
  }
  return w;
}

// ----------------------------- gold dataset -----------------------------

namespace {

struct FactSite {
  int doc = 0;
  int paragraph = 0;
  int sentence = 0;
};

// Split sizes that sum to `total`: floors first, remainder to the largest
// fractional parts in split order.
std::array<int, 3> apportion(int total, const std::array<double, 3>& fractions) {
  std::array<int, 3> out{};
  std::array<double, 3> rem{};
  int used = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fractions[static_cast<std::size_t>(i)] * total;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-9));
    rem[static_cast<std::size_t>(i)] = exact - out[static_cast<std::size_t>(i)];
    used += out[static_cast<std::size_t>(i)];
  }
  while (used < total) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (rem[i] > rem[best] + 1e-12) best = i;
    }
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

Example gold_example(const World& w, const FactSite& site, int template_index, const std::string& split,
                     int serial) {
  const Document& doc = w.documents[static_cast<std::size_t>(site.doc)];
  const Paragraph& para = doc.paragraphs[static_cast<std::size_t>(site.paragraph)];
  const Sentence& sent = para.sentences[static_cast<std::size_t>(site.sentence)];
  const auto q = render_question(w, w.facts[static_cast<std::size_t>(*sent.fact)], template_index);
  Example e;
  e.example_id = make_example_id("gold-" + split, doc.doc_id, site.paragraph, std::to_string(serial));
  e.context = para.tokens;
  e.question = q.tokens;
  e.answer = answer_span(sent, q.asks);
  e.sentence_span = sent.span;
  e.source = Source::gold;
  return e;
}

}  // namespace

GoldDataset synthesize_gold_dataset(const World& world, const SplitFractions& fractions, int n_examples,
                                    double unanswerable_ratio, std::uint64_t seed) {
  const std::array<double, 3> frac{fractions.train, fractions.dev, fractions.test};
  for (double f : frac) {
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (unanswerable_ratio < 0.0 || unanswerable_ratio > 1.0) throw ConfigError("unanswerable_ratio must lie in [0, 1]");
  if (n_examples < 0) throw ConfigError("n_examples must be non-negative");

  std::vector<int> labeled;
  for (std::size_t d = 0; d < world.documents.size(); ++d) {
    if (!world.documents[d].unlabeled) labeled.push_back(static_cast<int>(d));
  }
  Rng rng(derive_seed(seed, "gold"));
  rng.shuffle(labeled);

  const auto doc_counts = apportion(static_cast<int>(labeled.size()), frac);
  const auto example_counts = apportion(n_examples, frac);
  const std::array<std::string, 3> names{"train", "dev", "test"};

  GoldDataset out;
  out.world_seed = world.seed;
  std::array<std::vector<Example>*, 3> targets{&out.train, &out.dev, &out.test};

  int doc_cursor = 0;
  for (std::size_t split = 0; split < 3; ++split) {
    std::vector<int> docs(labeled.begin() + doc_cursor, labeled.begin() + doc_cursor + doc_counts[split]);
    doc_cursor += doc_counts[split];
    const int n_split = example_counts[split];
    if (n_split == 0) continue;

    std::vector<FactSite> sites;
    for (int d : docs) {
      const auto& doc = world.documents[static_cast<std::size_t>(d)];
      for (std::size_t p = 0; p < doc.paragraphs.size(); ++p) {
        for (std::size_t s = 0; s < doc.paragraphs[p].sentences.size(); ++s) {
          if (doc.paragraphs[p].sentences[s].fact) sites.push_back({d, static_cast<int>(p), static_cast<int>(s)});
        }
      }
    }
    const int n_unans = static_cast<int>(std::lround(unanswerable_ratio * n_split));
    const int n_ans = n_split - n_unans;
    if (static_cast<std::size_t>(n_ans) > sites.size() || static_cast<std::size_t>(n_unans) > sites.size()) {
      throw CapacityError("split '" + names[split] + "' needs " + std::to_string(std::max(n_ans, n_unans)) +
                          " distinct (context, fact) pairs but only " + std::to_string(sites.size()) + " exist");
    }

    Rng split_rng(derive_seed(seed, names[split]));
    std::vector<Example>& dest = *targets[split];
    const auto n_templates = static_cast<std::size_t>(world.config.templates_per_relation);
    int serial = 0;
    for (std::size_t i : split_rng.sample_without_replacement(sites.size(), static_cast<std::size_t>(n_ans))) {
      dest.push_back(gold_example(world, sites[i], static_cast<int>(split_rng.below(n_templates)), names[split], serial++));
    }
    for (std::size_t i : split_rng.sample_without_replacement(sites.size(), static_cast<std::size_t>(n_unans))) {
      const FactSite& site = sites[i];
      const auto& doc = world.documents[static_cast<std::size_t>(site.doc)];
      Example e = gold_example(world, site, static_cast<int>(split_rng.below(n_templates)), names[split], serial++);
      // Uniform over the other paragraphs of the document.
      int other = static_cast<int>(split_rng.below(doc.paragraphs.size() - 1));
      if (other >= site.paragraph) ++other;
      e.example_id = make_example_id("gold-" + names[split], doc.doc_id, other, std::to_string(serial - 1));
      e.context = doc.paragraphs[static_cast<std::size_t>(other)].tokens;
      e.answer.reset();
      e.sentence_span.reset();
      dest.push_back(std::move(e));
    }
    split_rng.shuffle(dest);
  }
  return out;
}

}  // namespace synmrc
