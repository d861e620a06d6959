#pragma once

#include "segattr/core.hpp"
#include "segattr/model.hpp"

#include "json.hpp"

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <vector>

// Line-delimited JSON protocol between the engine and an out-of-process
// model server. One request per line, exactly one response line each:
//
//   {"type":"hello","height":H,"width":W}
//     -> {"type":"hello","num_classes":K,"feature_shape":[C,h,w]}
//   {"type":"predict","image":T}            -> {"type":"predict","probs":T}
//   {"type":"grad","image":T,"class":c,"mask":B}
//     -> {"type":"grad","activations":T,"gradient":T}
//   {"type":"bye"}                          -> {"type":"bye"}
//   anything malformed                      -> {"type":"error","message":"..."}
//
// T = {"shape":[d0,d1,d2],"data":base64(float32 little-endian, row-major)}
// B = {"shape":[H,W],"data":base64(uint8 0/1, row-major)}
namespace segattr::bridge {

using json = nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws InvalidInput on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

json encode_tensor(const Tensor3T<float>& tensor);
/// Validates the shape and that the payload holds 4 * prod(shape) bytes.
Tensor3T<float> decode_tensor(const json& payload);

json encode_mask(const BinaryMask& mask);
BinaryMask decode_mask(const json& payload);

json hello_request(int height, int width);
json predict_request(const Image& x);
json grad_request(const Image& x, int class_id, const BinaryMask& mask);
json error_response(std::string_view message);

/// Answers one request using `model`. Never throws on bad input; malformed
/// requests get an error response. Sets `done` on bye.
json handle_request(ModelAdapter& model, const json& request, bool& done);

/// Request loop over streams; returns at bye or end of input.
void serve(ModelAdapter& model, std::istream& in, std::ostream& out);

/// Child process speaking over its stdin/stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_line(const std::string& line);
  /// Empty optional at end of stream.
  std::optional<std::string> read_line();
  /// Closes the child's stdin and waits for it; returns the exit status.
  int wait();

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// ModelAdapter backed by a bridge server process.
class BridgeAdapter final : public ModelAdapter {
 public:
  /// Launches `command` through /bin/sh and performs the hello exchange for
  /// inputs of size height x width.
  BridgeAdapter(const std::string& command, int height, int width);
  ~BridgeAdapter() override;

  int num_classes() const override { return num_classes_; }
  FeatureShape feature_shape(int height, int width) const override;
  ProbMap predict(const Image& x) override;
  FeatureBundle features_and_gradient(const Image& x, int class_id, const BinaryMask& mask) override;

 private:
  json round_trip(const json& request, std::string_view expected_type);

  ChildProcess process_;
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  FeatureShape feature_shape_;
  bool closed_ = false;
};

}  // namespace segattr::bridge
