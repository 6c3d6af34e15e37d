#include "triage/fuzz_backend.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/random.hpp"

namespace triage {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Crash: return "crash";
    case OutcomeKind::SanitizerViolation: return "sanitizer_violation";
    case OutcomeKind::Clean: return "clean";
    case OutcomeKind::Inconclusive: return "inconclusive";
    case OutcomeKind::InfrastructureFailure: return "infrastructure_failure";
  }
  return "inconclusive";
}

std::optional<OutcomeKind> parse_outcome_kind(std::string_view s) {
  for (auto k : {OutcomeKind::Crash, OutcomeKind::SanitizerViolation, OutcomeKind::Clean,
                 OutcomeKind::Inconclusive, OutcomeKind::InfrastructureFailure}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

void SimOracleConfig::validate() const {
  for (double p : {p_crash_given_tp, p_crash_given_fp, p_inconclusive}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("simulated oracle probabilities must lie in [0, 1]");
  }
  if (p_crash_given_fp > p_crash_given_tp) {
    throw ValidationError("simulated oracle needs p_crash_given_fp <= p_crash_given_tp");
  }
}

FuzzOutcome simulate_outcome(const SimOracleConfig& cfg, WarningId id, Label label, std::uint64_t draw) {
  // Two uniforms per draw from the (seed, id) stream.
  Rng rng(combine_seed(cfg.seed, id));
  for (std::uint64_t k = 0; k < draw; ++k) {
    rng.next();
    rng.next();
  }
  const double u_crash = rng.uniform();
  const double u_inconclusive = rng.uniform();
  const double p_crash = label == Label::TruePositive ? cfg.p_crash_given_tp : cfg.p_crash_given_fp;
  if (u_crash < p_crash) return {OutcomeKind::Crash, 0.0, "simulated crash"};
  if (u_inconclusive < cfg.p_inconclusive) return {OutcomeKind::Inconclusive, 0.0, "simulated: no verdict"};
  return {OutcomeKind::Clean, 0.0, "simulated clean run"};
}

SimulatedBackend::SimulatedBackend(SimOracleConfig cfg) : cfg_(cfg) { cfg_.validate(); }

FuzzOutcome SimulatedBackend::run(const FuzzRequest& request) const {
  if (!request.true_label) {
    return {OutcomeKind::InfrastructureFailure, 0.0, "simulated backend needs a ground-truth label"};
  }
  return simulate_outcome(cfg_, request.warning_id, *request.true_label, request.draw);
}

std::vector<RecordedOutcome> parse_recorded_outcomes(std::string_view content) {
  std::vector<RecordedOutcome> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw SchemaError(index, "<line>", "of the recorded outcomes is not valid JSON");
    }
    RecordedOutcome r;
    auto id = obj.contains("warning_id") && obj["warning_id"].is_string()
                  ? parse_hex(obj["warning_id"].get<std::string>())
                  : std::nullopt;
    if (!id) throw SchemaError(index, "warning_id", "must be a hex string");
    r.id = *id;
    auto kind = obj.contains("kind") && obj["kind"].is_string()
                    ? parse_outcome_kind(obj["kind"].get<std::string>())
                    : std::nullopt;
    if (!kind) throw SchemaError(index, "kind", "must name a fuzz outcome kind");
    r.outcome.kind = *kind;
    if (obj.contains("elapsed")) {
      if (!obj["elapsed"].is_number() || obj["elapsed"].get<double>() < 0.0) {
        throw SchemaError(index, "elapsed", "must be a non-negative number");
      }
      r.outcome.elapsed = obj["elapsed"].get<double>();
    }
    if (obj.contains("detail") && obj["detail"].is_string()) r.outcome.detail = obj["detail"].get<std::string>();
    out.push_back(std::move(r));
    ++index;
  }
  return out;
}

std::string serialize_recorded_outcomes(std::span<const RecordedOutcome> outcomes) {
  std::string out;
  for (const auto& r : outcomes) {
    ordered_json o;
    o["warning_id"] = to_hex(r.id);
    o["kind"] = std::string(to_string(r.outcome.kind));
    o["elapsed"] = r.outcome.elapsed;
    o["detail"] = r.outcome.detail;
    out += o.dump();
    out += '\n';
  }
  return out;
}

RecordedBackend::RecordedBackend(std::span<const RecordedOutcome> outcomes) {
  for (const auto& r : outcomes) outcomes_[r.id] = r.outcome;
}

FuzzOutcome RecordedBackend::run(const FuzzRequest& request) const {
  auto it = outcomes_.find(request.warning_id);
  if (it == outcomes_.end()) throw MissingRecording(to_hex(request.warning_id));
  return it->second;
}

ExternalConfig apply_environment(ExternalConfig config) {
  if (const char* cmd = std::getenv("TRIAGE_FUZZ_CMD"); cmd && *cmd) config.command = cmd;
  return config;
}

double clamp_budget(double seconds, double lo, double hi) {
  if (!std::isfinite(seconds)) return lo;
  return std::clamp(seconds, lo, hi);
}

OutcomeKind classify_process_result(int exit_status, bool signaled, std::string_view output,
                                    const ExternalConfig& config, std::string* detail) {
  const std::string text(output);
  auto first_match = [&](const std::string& pattern, std::string* where) {
    if (pattern.empty()) return false;
    std::smatch m;
    if (!std::regex_search(text, m, std::regex(pattern))) return false;
    if (where) *where = m.str(0);
    return true;
  };
  std::string found;
  if (first_match(config.sanitizer_marker, &found)) {
    if (detail) *detail = "sanitizer: " + found;
    return OutcomeKind::SanitizerViolation;
  }
  if (first_match(config.build_failure_marker, &found)) {
    if (detail) *detail = "build failure: " + found;
    return OutcomeKind::InfrastructureFailure;
  }
  if (!signaled && exit_status == 0) {
    if (detail) *detail = "exit 0";
    return OutcomeKind::Clean;
  }
  if (first_match(config.crash_marker, &found)) {
    if (detail) *detail = "crash: " + found;
    return OutcomeKind::Crash;
  }
  if (!signaled && exit_status == 127) {
    if (detail) *detail = "command not found";
    return OutcomeKind::InfrastructureFailure;
  }
  if (detail) {
    *detail = signaled ? "terminated by signal " + std::to_string(exit_status)
                       : "exit " + std::to_string(exit_status) + " without a recognised marker";
  }
  return OutcomeKind::Inconclusive;
}

struct ExternalBackend::Pool {
  std::mutex mutex;
  std::condition_variable cv;
  int free = 1;
};

ExternalBackend::ExternalBackend(ExternalConfig config, TemplateSet templates)
    : config_(std::move(config)), templates_(std::move(templates)), pool_(std::make_shared<Pool>()) {
  pool_->free = std::max(1, config_.max_concurrent);
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string format_seconds(double s) {
  std::ostringstream out;
  if (s == std::floor(s)) out << static_cast<long long>(s);
  else out << s;
  return out.str();
}

}  // namespace

FuzzOutcome ExternalBackend::run(const FuzzRequest& request) const {
  using clock = std::chrono::steady_clock;
  auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
  auto failure = [&](std::string why) {
    return FuzzOutcome{OutcomeKind::InfrastructureFailure, elapsed(), std::move(why)};
  };

  if (config_.command.empty()) return failure("no fuzz command configured (set TRIAGE_FUZZ_CMD)");
  if (!request.record) return failure("external backend needs the warning record to build a harness");

  std::string harness;
  try {
    harness = generate_harness(*request.record, templates_);
  } catch (const std::exception& e) {
    return failure(std::string("harness generation: ") + e.what());
  }

  std::filesystem::path path;
  try {
    std::filesystem::create_directories(config_.work_dir);
    path = std::filesystem::path(config_.work_dir) / ("fuzz_" + to_hex(request.warning_id) + ".rs");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << harness;
    if (!out) return failure("cannot write harness to " + path.string());
  } catch (const std::exception& e) {
    return failure(std::string("cannot prepare harness directory: ") + e.what());
  }

  {
    std::unique_lock lock(pool_->mutex);
    pool_->cv.wait(lock, [&] { return pool_->free > 0; });
    --pool_->free;
  }
  struct Release {
    Pool& pool;
    ~Release() {
      {
        std::lock_guard lock(pool.mutex);
        ++pool.free;
      }
      pool.cv.notify_one();
    }
  } release{*pool_};
  start = clock::now();

  const double budget = clamp_budget(request.budget_seconds, config_.min_budget, config_.max_budget);
  const std::string command =
      config_.command + " " + shell_quote(path.string()) + " --budget " + format_seconds(budget);

  int pipefd[2];
  if (pipe(pipefd) != 0) return failure(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) {
    close(pipefd[0]);
    close(pipefd[1]);
    return failure(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(pipefd[1], STDOUT_FILENO);
    dup2(pipefd[1], STDERR_FILENO);
    close(pipefd[0]);
    close(pipefd[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(pipefd[1]);
  fcntl(pipefd[0], F_SETFL, fcntl(pipefd[0], F_GETFL) | O_NONBLOCK);

  const auto deadline = start + std::chrono::duration_cast<clock::duration>(
                                    std::chrono::duration<double>(budget + config_.grace));
  std::string output;
  bool timed_out = false;
  bool eof = false;
  int status = 0;
  bool reaped = false;
  while (true) {
    if (!reaped) {
      const pid_t w = waitpid(pid, &status, WNOHANG);
      if (w == pid) reaped = true;
    }
    if (reaped && eof) break;
    const auto now = clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    pollfd pfd{pipefd[0], POLLIN, 0};
    const int wait_ms = static_cast<int>(std::min<long long>(remaining, 50));
    if (!eof && poll(&pfd, 1, wait_ms) > 0) {
      char buf[4096];
      const ssize_t n = read(pipefd[0], buf, sizeof buf);
      if (n > 0) {
        if (output.size() < (1u << 20)) output.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0) {
        eof = true;
      }
    } else if (eof) {
      usleep(static_cast<useconds_t>(wait_ms) * 1000);
    }
  }
  close(pipefd[0]);

  if (timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
    if (!reaped) waitpid(pid, &status, 0);
    return {OutcomeKind::Inconclusive, elapsed(), "timeout"};
  }

  const bool signaled = WIFSIGNALED(status);
  const int code = signaled ? WTERMSIG(status) : WEXITSTATUS(status);
  FuzzOutcome outcome;
  outcome.kind = classify_process_result(code, signaled, output, config_, &outcome.detail);
  outcome.elapsed = elapsed();
  return outcome;
}

}  // namespace triage
