#ifndef BUSRL_ERRORS_HPP_
#define BUSRL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace busrl {

// Bad configuration values or malformed config / curriculum files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (e.g. a masked action).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN / inf surfaced in a forward pass, loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace busrl

#endif  // BUSRL_ERRORS_HPP_
