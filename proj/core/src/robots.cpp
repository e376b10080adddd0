#include "wildharvest/robots.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace wildharvest {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool match_from(std::string_view pat, std::string_view path) {
  if (pat.empty()) return true;
  if (pat == "$") return path.empty();
  if (pat[0] == '*') {
    for (std::size_t i = 0; i <= path.size(); ++i)
      if (match_from(pat.substr(1), path.substr(i))) return true;
    return false;
  }
  return !path.empty() && pat[0] == path[0] && match_from(pat.substr(1), path.substr(1));
}

}  // namespace

RobotsRules RobotsRules::parse(std::string_view text, std::string_view user_agent) {
  const std::string agent = lower(std::string(user_agent));
  struct Group {
    std::vector<std::string> agents;
    std::vector<Rule> rules;
  };
  std::vector<Group> groups;
  bool last_was_agent = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = lower(trim(std::string_view(line).substr(0, colon)));
    const std::string value = trim(std::string_view(line).substr(colon + 1));
    if (key == "user-agent") {
      if (!last_was_agent) groups.emplace_back();
      groups.back().agents.push_back(lower(value));
      last_was_agent = true;
    } else if (key == "allow" || key == "disallow") {
      last_was_agent = false;
      if (groups.empty() || value.empty()) continue;  // empty Disallow allows everything
      groups.back().rules.push_back(Rule{value, key == "allow"});
    } else {
      last_was_agent = false;
    }
  }
  RobotsRules out;
  const Group* specific = nullptr;
  const Group* wildcard = nullptr;
  for (const auto& g : groups) {
    for (const auto& a : g.agents) {
      if (a == "*") wildcard = wildcard ? wildcard : &g;
      else if (!agent.empty() && agent.find(a) != std::string::npos) specific = specific ? specific : &g;
    }
  }
  if (const Group* chosen = specific ? specific : wildcard) out.rules_ = chosen->rules;
  return out;
}

bool RobotsRules::allows(std::string_view path) const {
  const Rule* best = nullptr;
  for (const auto& r : rules_) {
    if (!match_from(r.pattern + (r.pattern.back() == '$' || r.pattern.back() == '*' ? "" : "*"), path)) continue;
    if (!best || r.pattern.size() > best->pattern.size() ||
        (r.pattern.size() == best->pattern.size() && r.allow && !best->allow))
      best = &r;
  }
  return !best || best->allow;
}

}  // namespace wildharvest
