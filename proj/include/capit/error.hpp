#pragma once

#include <stdexcept>
#include <string>

namespace capit {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// InvalidInput/ConfigError -> 1, IoError/IntegrityError/DegenerateInput -> 2,
// NumericAbort -> 3.

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inputs that are well-formed but leave a quantity undefined (empty mask, too
// few usable feature locations).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, long long batch_id)
      : std::runtime_error(what), batch_id_(batch_id) {}
  long long batch_id() const { return batch_id_; }

 private:
  long long batch_id_;
};

#define CAPIT_REQUIRE(cond, Exc, msg) \
  do {                                \
    if (!(cond)) throw Exc(msg);      \
  } while (0)

}  // namespace capit
