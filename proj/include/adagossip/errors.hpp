#ifndef ADAGOSSIP_ERRORS_HPP_
#define ADAGOSSIP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace adagossip {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

class CompressionError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatches, bad hyper-parameters, non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace adagossip

#endif  // ADAGOSSIP_ERRORS_HPP_
