#include "wildharvest/extraction.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "wildharvest/errors.hpp"
#include "wildharvest/parallel.hpp"

namespace wildharvest {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = values.find(text.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

PromptTemplate make_template(const std::string& template_id, const std::string& version, const std::string& text) {
  if (version.empty()) throw ConfigError("prompt template " + template_id + " has no version");
  std::string needed;
  if (template_id == "p1") needed = "{article}";
  else if (template_id == "p2") needed = "{caption}";
  else throw ConfigError("unknown prompt template id '" + template_id + "'");
  if (text.find(needed) == std::string::npos)
    throw ConfigError("prompt template " + template_id + "@" + version + " lacks the " + needed + " placeholder");
  return PromptTemplate{template_id, version, text};
}

PromptTemplate load_template(const fs::path& dir, const std::string& ref) {
  const auto at = ref.find('@');
  if (at == std::string::npos || at == 0 || at + 1 == ref.size())
    throw ConfigError("template reference must look like p1@v1, got '" + ref + "'");
  const fs::path path = dir / (ref + ".txt");
  if (!fs::exists(path)) throw ConfigError("prompt template " + path.string() + " does not exist");
  std::istringstream in(read_text(path));
  std::string line, body;
  bool in_header = true;
  while (std::getline(in, line)) {
    if (in_header && !line.empty() && line[0] == '#') continue;
    in_header = false;
    body += line;
    body += '\n';
  }
  return make_template(ref.substr(0, at), ref.substr(at + 1), trim(body) + "\n");
}

std::string truncate_words(const std::string& text, std::size_t budget) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  if (words.size() <= budget) return text;
  const std::size_t head = budget - budget / 4;
  const std::size_t tail = budget - head;
  std::string out;
  for (std::size_t i = 0; i < head; ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  out += " ...";
  for (std::size_t i = words.size() - tail; i < words.size(); ++i) {
    out += ' ';
    out += words[i];
  }
  return out;
}

DescriptionSet parse_extraction_response(const std::string& article_id, const json& r) {
  auto fail = [&](const std::string& why) -> ExtractionSchemaError {
    return ExtractionSchemaError("article " + article_id + ": " + why);
  };
  if (!r.is_object()) throw fail("response is not an object");
  for (const auto& [key, _] : r.items())
    if (key != "relevant" && key != "captions" && key != "image_urls") throw fail("unexpected field '" + key + "'");
  if (!r.contains("relevant") || !r["relevant"].is_boolean()) throw fail("'relevant' must be a boolean");
  if (!r.contains("captions") || !r["captions"].is_array()) throw fail("'captions' must be an array");
  if (!r.contains("image_urls") || !r["image_urls"].is_array()) throw fail("'image_urls' must be an array");

  DescriptionSet d;
  d.article_id = article_id;
  d.relevant = r["relevant"].get<bool>();
  for (const auto& c : r["captions"]) {
    if (!c.is_string()) throw fail("caption is not a string");
    std::string t = trim(c.get<std::string>());
    if (t.empty()) throw fail("empty caption");
    d.captions.push_back(std::move(t));
  }
  for (const auto& u : r["image_urls"]) {
    if (!u.is_string() || u.get<std::string>().empty()) throw fail("image url is not a nonempty string");
    d.image_urls.push_back(u.get<std::string>());
  }
  if (d.relevant && d.captions.empty()) throw fail("relevant article without captions");
  if (!d.relevant && !d.captions.empty()) throw fail("captions reported for an irrelevant article");
  return d;
}

DescriptionSet extract_descriptions(const Article& a, const PromptTemplate& p1, TextModelBackend& g,
                                    std::size_t word_budget) {
  if (trim(a.body_text).empty()) throw InvariantError("article " + a.article_id + " has an empty body");
  if (p1.template_id != "p1") throw ConfigError("extraction needs a p1 template, got " + p1.ref());
  const std::string input = truncate_words(a.body_text, word_budget);
  TextRequest req{a.article_id, p1.render({{"article", input}}), input};
  return parse_extraction_response(a.article_id, g.complete(req));
}

ExtractionRun extract_corpus(const std::vector<Article>& articles, const PromptTemplate& p1, TextModelBackend& g,
                             std::size_t word_budget) {
  struct Outcome {
    std::optional<DescriptionSet> d;
    std::string error;
  };
  auto outcomes = parallel_map(articles, g.descriptor().concurrency, [&](const Article& a) {
    Outcome o;
    try {
      o.d = extract_descriptions(a, p1, g, word_budget);
    } catch (const ExtractionSchemaError& e) {
      o.error = e.what();
    } catch (const InvariantError& e) {
      o.error = e.what();
    }
    return o;
  });
  ExtractionRun run;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    if (outcomes[i].d) {
      run.descriptions.push_back(std::move(*outcomes[i].d));
    } else {
      spdlog::warn("quarantined {}: {}", articles[i].article_id, outcomes[i].error);
      run.quarantined[articles[i].article_id] = outcomes[i].error;
    }
  }
  std::sort(run.descriptions.begin(), run.descriptions.end(),
            [](const DescriptionSet& x, const DescriptionSet& y) { return x.article_id < y.article_id; });
  return run;
}

Article merge_image_urls(Article a, const DescriptionSet& d) {
  std::set<std::string> seen(a.raw_image_urls.begin(), a.raw_image_urls.end());
  for (const auto& u : d.image_urls)
    if (seen.insert(u).second) a.raw_image_urls.push_back(u);
  return a;
}

}  // namespace wildharvest
