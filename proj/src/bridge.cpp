#include "segattr/bridge.hpp"

#include <array>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <thread>

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace segattr::bridge {

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int alphabet_index(char ch) {
  if (ch >= 'A' && ch <= 'Z') return ch - 'A';
  if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
  if (ch >= '0' && ch <= '9') return ch - '0' + 52;
  if (ch == '+') return 62;
  if (ch == '/') return 63;
  return -1;
}

std::vector<std::int64_t> read_shape(const json& payload, std::size_t rank) {
  if (!payload.is_object() || !payload.contains("shape") || !payload.contains("data"))
    throw InvalidInput("tensor payload needs 'shape' and 'data'");
  const json& shape = payload.at("shape");
  if (!shape.is_array() || shape.size() != rank)
    throw InvalidInput("tensor shape must have " + std::to_string(rank) + " entries");
  std::vector<std::int64_t> dims;
  for (const json& d : shape) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 1) throw InvalidInput("tensor dimensions must be positive integers");
    dims.push_back(d.get<std::int64_t>());
  }
  if (!payload.at("data").is_string()) throw InvalidInput("tensor data must be a base64 string");
  return dims;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw InvalidInput("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::array<int, 4> idx{};
    for (int j = 0; j < 4; ++j) {
      const char ch = text[i + static_cast<std::size_t>(j)];
      if (ch == '=' && last && j >= 2) {
        idx[static_cast<std::size_t>(j)] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw InvalidInput("base64 padding in the middle of a quantum");
      idx[static_cast<std::size_t>(j)] = alphabet_index(ch);
      if (idx[static_cast<std::size_t>(j)] < 0) throw InvalidInput("invalid base64 character");
    }
    const std::uint32_t v = (static_cast<std::uint32_t>(idx[0]) << 18) | (static_cast<std::uint32_t>(idx[1]) << 12) |
                            (static_cast<std::uint32_t>(idx[2]) << 6) | static_cast<std::uint32_t>(idx[3]);
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

json encode_tensor(const Tensor3T<float>& tensor) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(tensor.data.size()) * 4);
  for (Eigen::Index i = 0; i < tensor.data.size(); ++i) {
    std::uint32_t bits = 0;
    const float value = tensor.data.data()[i];
    std::memcpy(&bits, &value, 4);
    for (int b = 0; b < 4; ++b) bytes[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return {{"shape", {tensor.channels(), tensor.height, tensor.width}}, {"data", base64_encode(bytes)}};
}

Tensor3T<float> decode_tensor(const json& payload) {
  const auto dims = read_shape(payload, 3);
  const std::vector<std::uint8_t> bytes = base64_decode(payload.at("data").get<std::string>());
  const std::int64_t count = dims[0] * dims[1] * dims[2];
  if (bytes.size() != static_cast<std::size_t>(count) * 4)
    throw InvalidInput("tensor payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                       std::to_string(count * 4));
  Tensor3T<float> out(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
  for (std::int64_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[static_cast<std::size_t>(i * 4 + b)]} << (8 * b);
    float value = 0.0f;
    std::memcpy(&value, &bits, 4);
    out.data.data()[i] = value;
  }
  return out;
}

json encode_mask(const BinaryMask& mask) {
  const std::span<const std::uint8_t> bytes(mask.data().data(), static_cast<std::size_t>(mask.size()));
  return {{"shape", {mask.height(), mask.width()}}, {"data", base64_encode(bytes)}};
}

BinaryMask decode_mask(const json& payload) {
  const auto dims = read_shape(payload, 2);
  const std::vector<std::uint8_t> bytes = base64_decode(payload.at("data").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(dims[0] * dims[1])) throw InvalidInput("mask payload size does not match shape");
  BinaryMask::Storage data(dims[0], dims[1]);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] > 1) throw InvalidInput("mask bytes must be 0 or 1");
    data.data()[i] = bytes[i];
  }
  return BinaryMask(std::move(data));
}

json hello_request(int height, int width) { return {{"type", "hello"}, {"height", height}, {"width", width}}; }

json predict_request(const Image& x) { return {{"type", "predict"}, {"image", encode_tensor(x.cast<float>())}}; }

json grad_request(const Image& x, int class_id, const BinaryMask& mask) {
  return {{"type", "grad"}, {"image", encode_tensor(x.cast<float>())}, {"class", class_id}, {"mask", encode_mask(mask)}};
}

json error_response(std::string_view message) { return {{"type", "error"}, {"message", std::string(message)}}; }

json handle_request(ModelAdapter& model, const json& request, bool& done) {
  try {
    if (!request.is_object() || !request.contains("type") || !request.at("type").is_string())
      return error_response("request must be an object with a string 'type'");
    const std::string type = request.at("type").get<std::string>();
    if (type == "hello") {
      const int h = request.value("height", 224);
      const int w = request.value("width", 224);
      const FeatureShape fs = model.feature_shape(h, w);
      return {{"type", "hello"}, {"num_classes", model.num_classes()}, {"feature_shape", {fs.channels, fs.height, fs.width}}};
    }
    if (type == "predict") {
      const Image x = decode_tensor(request.at("image")).cast<double>();
      return {{"type", "predict"}, {"probs", encode_tensor(model.predict(x).cast<float>())}};
    }
    if (type == "grad") {
      const Image x = decode_tensor(request.at("image")).cast<double>();
      const BinaryMask mask = decode_mask(request.at("mask"));
      const FeatureBundle bundle = model.features_and_gradient(x, request.at("class").get<int>(), mask);
      return {{"type", "grad"},
              {"activations", encode_tensor(bundle.activations.cast<float>())},
              {"gradient", encode_tensor(bundle.gradient.cast<float>())}};
    }
    if (type == "bye") {
      done = true;
      return {{"type", "bye"}};
    }
    return error_response("unknown request type '" + type + "'");
  } catch (const std::exception& e) {
    return error_response(e.what());
  }
}

void serve(ModelAdapter& model, std::istream& in, std::ostream& out) {
  std::string line;
  bool done = false;
  while (!done && std::getline(in, line)) {
    if (line.empty()) continue;
    json response;
    try {
      response = handle_request(model, json::parse(line), done);
    } catch (const json::parse_error& e) {
      response = error_response(std::string("malformed JSON: ") + e.what());
    }
    out << response.dump() << '\n' << std::flush;
  }
}

ChildProcess::ChildProcess(const std::string& command) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
    throw AdapterError(std::string("socketpair failed: ") + std::strerror(errno));
  pid_ = ::fork();
  if (pid_ < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw AdapterError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  to_child_ = fds[0];
  from_child_ = fds[0];
}

ChildProcess::~ChildProcess() {
  if (pid_ <= 0) return;
  ::shutdown(to_child_, SHUT_WR);
  for (int attempt = 0; attempt < 200; ++attempt) {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
      pid_ = -1;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  ::close(to_child_);
}

void ChildProcess::write_line(const std::string& line) {
  std::string framed = line + '\n';
  std::size_t sent = 0;
  while (sent < framed.size()) {
    const ssize_t n = ::send(to_child_, framed.data() + sent, framed.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw AdapterError(std::string("bridge write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> ChildProcess::read_line() {
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    char chunk[65536];
    const ssize_t n = ::recv(from_child_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw AdapterError(std::string("bridge read failed: ") + std::strerror(errno));
    }
    if (n == 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

int ChildProcess::wait() {
  if (pid_ <= 0) return -1;
  ::shutdown(to_child_, SHUT_WR);
  int status = 0;
  ::waitpid(pid_, &status, 0);
  pid_ = -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

BridgeAdapter::BridgeAdapter(const std::string& command, int height, int width)
    : process_(command), height_(height), width_(width) {
  const json reply = round_trip(hello_request(height, width), "hello");
  try {
    num_classes_ = reply.at("num_classes").get<int>();
    const auto& fs = reply.at("feature_shape");
    if (!fs.is_array() || fs.size() != 3) throw AdapterError("bridge hello: feature_shape must have 3 entries");
    feature_shape_ = {fs[0].get<int>(), fs[1].get<int>(), fs[2].get<int>()};
  } catch (const json::exception& e) {
    throw AdapterError(std::string("bridge hello: ") + e.what());
  }
  if (num_classes_ < 2) throw AdapterError("bridge hello: fewer than 2 classes");
}

BridgeAdapter::~BridgeAdapter() {
  if (closed_) return;
  try {
    process_.write_line(json{{"type", "bye"}}.dump());
    process_.read_line();
  } catch (const std::exception&) {
    // The process is reaped by ChildProcess either way.
  }
}

json BridgeAdapter::round_trip(const json& request, std::string_view expected_type) {
  process_.write_line(request.dump());
  const auto line = process_.read_line();
  if (!line) {
    closed_ = true;
    throw AdapterError("bridge process closed its output");
  }
  json reply;
  try {
    reply = json::parse(*line);
  } catch (const json::parse_error& e) {
    throw AdapterError(std::string("bridge sent malformed JSON: ") + e.what());
  }
  const std::string type = reply.value("type", "");
  if (type == "error") throw AdapterError("bridge error: " + reply.value("message", std::string("(no message)")));
  if (type != expected_type) throw AdapterError("bridge replied '" + type + "' to a '" + std::string(expected_type) + "' request");
  return reply;
}

FeatureShape BridgeAdapter::feature_shape(int height, int width) const {
  if (height != height_ || width != width_)
    throw InvalidInput("bridge adapter was opened for " + std::to_string(height_) + "x" + std::to_string(width_) + " inputs");
  return feature_shape_;
}

ProbMap BridgeAdapter::predict(const Image& x) {
  check_image(x);
  if (x.height != height_ || x.width != width_) throw InvalidInput("image size does not match the bridge session");
  try {
    ProbMap probs = decode_tensor(round_trip(predict_request(x), "predict").at("probs")).cast<double>();
    if (probs.channels() != num_classes_ || probs.height != x.height || probs.width != x.width)
      throw AdapterError("bridge predict returned a tensor of the wrong shape");
    return probs;
  } catch (const InvalidInput& e) {
    throw AdapterError(std::string("bridge predict payload: ") + e.what());
  } catch (const json::exception& e) {
    throw AdapterError(std::string("bridge predict payload: ") + e.what());
  }
}

FeatureBundle BridgeAdapter::features_and_gradient(const Image& x, int class_id, const BinaryMask& mask) {
  check_image(x);
  if (x.height != height_ || x.width != width_) throw InvalidInput("image size does not match the bridge session");
  if (class_id < 0 || class_id >= num_classes_) throw InvalidInput("class id out of range");
  if (mask.popcount() == 0) throw EmptyRegion("target mask is empty");
  try {
    const json reply = round_trip(grad_request(x, class_id, mask), "grad");
    FeatureBundle bundle;
    bundle.activations = decode_tensor(reply.at("activations")).cast<double>();
    bundle.gradient = decode_tensor(reply.at("gradient")).cast<double>();
    if (bundle.activations.channels() != bundle.gradient.channels() || bundle.activations.height != bundle.gradient.height ||
        bundle.activations.width != bundle.gradient.width)
      throw AdapterError("bridge grad returned mismatched activation and gradient shapes");
    return bundle;
  } catch (const InvalidInput& e) {
    throw AdapterError(std::string("bridge grad payload: ") + e.what());
  } catch (const json::exception& e) {
    throw AdapterError(std::string("bridge grad payload: ") + e.what());
  }
}

}  // namespace segattr::bridge
