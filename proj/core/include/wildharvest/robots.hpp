#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wildharvest {

/// Allow/Disallow prefix rules from robots.txt for one user agent. The longest
/// matching rule wins; Allow wins ties. `*` and a trailing `$` are supported.
class RobotsRules {
 public:
  static RobotsRules parse(std::string_view text, std::string_view user_agent);
  bool allows(std::string_view path) const;

 private:
  struct Rule {
    std::string pattern;
    bool allow = false;
  };
  std::vector<Rule> rules_;
};

}  // namespace wildharvest
