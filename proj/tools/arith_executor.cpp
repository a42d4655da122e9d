// Toy denotation executor for prefix arithmetic forms such as
// "( + 1 ( * 2 3 ) )". Reads one form per line from stdin and writes its
// integer value per line to stdout. A malformed form, or division by zero,
// exits with status 1.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

class Evaluator {
 public:
  explicit Evaluator(std::vector<std::string> tokens) : toks_(std::move(tokens)) {}

  std::int64_t run() {
    const auto v = expr();
    if (pos_ != toks_.size()) throw std::runtime_error("trailing tokens");
    return v;
  }

 private:
  const std::string& next() {
    if (pos_ >= toks_.size()) throw std::runtime_error("unexpected end of form");
    return toks_[pos_++];
  }

  std::int64_t expr() {
    const auto& t = next();
    if (t != "(") {
      std::size_t used = 0;
      const auto v = std::stoll(t, &used);
      if (used != t.size()) throw std::runtime_error("bad number: " + t);
      return v;
    }
    const std::string op = next();
    std::vector<std::int64_t> args;
    while (pos_ < toks_.size() && toks_[pos_] != ")") args.push_back(expr());
    if (next() != ")") throw std::runtime_error("missing )");
    if (args.empty()) throw std::runtime_error("operator without arguments");
    std::int64_t acc = args[0];
    if (op == "-" && args.size() == 1) return -acc;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (op == "+") acc += args[i];
      else if (op == "-") acc -= args[i];
      else if (op == "*") acc *= args[i];
      else if (op == "/") {
        if (args[i] == 0) throw std::runtime_error("division by zero");
        acc /= args[i];
      } else {
        throw std::runtime_error("unknown operator: " + op);
      }
    }
    return acc;
  }

  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

int main() {
  std::string line;
  while (std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::vector<std::string> toks;
    for (std::string t; in >> t;) toks.push_back(t);
    try {
      std::cout << Evaluator(std::move(toks)).run() << '\n';
    } catch (const std::exception& e) {
      std::cerr << "arith_executor: " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}
