#include "eventforge/pixel.hpp"

#include <algorithm>
#include <cmath>

#include "eventforge/error.hpp"

namespace eventforge {

namespace {

Tick to_tick(double t, bool nearest) {
  double v = nearest ? std::nearbyint(t) : std::floor(t);
  if (!(v >= 0.0) || v > double(kInfiniteTicks - 1)) {
    throw Error(ErrorKind::Parameter, "event time exceeds 32-bit tick range");
  }
  return static_cast<Tick>(v);
}

// Framed list pixels round like collapse pixels: their events are read
// against input boundaries, not against queued edges.
bool rounds_to_nearest(PixelMode mode, const PixelConfig& config) {
  return mode == PixelMode::Collapse || config.discard_after_emit;
}

}  // namespace

PixelState::PixelState(PixelMode mode, PixelConfig config)
    : mode_(mode), config_(config) {}

void PixelState::begin_level(double baseline, double base_m) {
  has_baseline_ = true;
  baseline_ = baseline;
  current_m_ = base_m;
  growth_ = 0.0;
  level_start_ = running_t_;
  emitted_at_level_ = false;
  if (mode_ == PixelMode::Collapse) {
    nodes_.clear();
    candidate_.reset();
  }
}

void PixelState::set_running_t(double t) {
  if (!nodes_.empty()) {
    throw Error(ErrorKind::Parameter, "cannot move the clock of an integrating pixel");
  }
  running_t_ = t;
  level_start_ = t;
}

bool PixelState::should_flush(double incoming) const noexcept {
  return has_baseline_ && std::fabs(incoming - baseline_) > current_m_;
}

void PixelState::emit(std::uint8_t d, double t, std::vector<Emission>& out) {
  Tick tick = to_tick(t, rounds_to_nearest(mode_, config_));
  if (last_emit_ && tick < *last_emit_) tick = *last_emit_;
  out.push_back({d, tick});
  last_emit_ = tick;
}

void PixelState::integrate(double intensity, double span, std::vector<Emission>& out) {
  if (!(intensity >= 0.0) || !(span > 0.0)) {
    throw Error(ErrorKind::Parameter, "integrate needs intensity >= 0 and span > 0");
  }
  // A span crossing the dt_max bound of an event-less level is split there so
  // the forced event cannot overshoot.
  const double bound = level_start_ + config_.dt_max;
  if (!emitted_at_level_ && running_t_ < bound && running_t_ + span > bound) {
    const double part = bound - running_t_;
    integrate_span(intensity * part / span, part, out);
    enforce_dtmax(out);
    const double rest = span - part;
    if (config_.discard_after_emit && emitted_at_level_ && nodes_.empty()) {
      running_t_ += rest;
      return;
    }
    integrate_span(intensity * rest / span, rest, out);
    return;
  }
  integrate_span(intensity, span, out);
}

void PixelState::integrate_span(double intensity, double span, std::vector<Emission>& out) {
  if (nodes_.empty()) {
    PixelNode head;
    head.d = static_cast<std::uint8_t>(floor_log2_clamped(intensity));
    head.start = running_t_;
    nodes_.push_back(head);
  }
  if (mode_ == PixelMode::Collapse) {
    collapse_integrate(intensity, span, out);
  } else {
    list_integrate(intensity, span);
  }
}

void PixelState::collapse_integrate(double intensity, double span,
                                    std::vector<Emission>& out) {
  PixelNode& node = nodes_.front();
  const double rate = intensity / span;
  double remaining = intensity;
  double t = running_t_;

  while (remaining > 0.0 && node.d < kMaxD) {
    const double need = pow2(node.d) - node.intensity;
    if (need > remaining) break;
    const double t_cross = t + need / rate;
    if (candidate_ && !emitted_at_level_ &&
        t_cross - level_start_ > config_.dt_max) {
      // The held candidate is the last one that still fits the first-event
      // bound; commit it and keep integrating from its end.
      commit_candidate(out);
      continue;
    }
    candidate_ = Candidate{node.d, t_cross};
    node.intensity += need;
    remaining -= need;
    t = t_cross;
    node.d = static_cast<std::uint8_t>(node.d + 1);
  }
  node.intensity += remaining;
  running_t_ += span;
  node.elapsed = running_t_ - node.start;
}

void PixelState::commit_candidate(std::vector<Emission>& out) {
  PixelNode& node = nodes_.front();
  emit(candidate_->d, candidate_->t, out);
  emitted_at_level_ = true;
  node.intensity = std::max(0.0, node.intensity - pow2(candidate_->d));
  node.start = candidate_->t;
  node.elapsed = running_t_ - node.start;
  candidate_.reset();
  if (config_.discard_after_emit) {
    nodes_.clear();
  }
}

void PixelState::list_integrate(double intensity, double span) {
  const int child_cap = floor_log2_clamped(intensity);
  double in_i = intensity;
  double in_dt = span;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    PixelNode& node = nodes_[k];
    const double total = node.intensity + in_i;
    if (in_i > 0.0 && node.d < kMaxD && total >= pow2(node.d)) {
      const int d_edge = std::max<int>(node.d, floor_log2_clamped(total));
      const double need = pow2(d_edge) - node.intensity;
      const double frac = need / in_i * in_dt;
      const double cross = node.elapsed + frac;
      node.edge = PixelEdge{static_cast<std::uint8_t>(d_edge), cross};
      node.d = static_cast<std::uint8_t>(std::min<int>(d_edge + 1, kMaxD));
      node.intensity = total;
      node.elapsed += in_dt;
      const double child_start = node.start + cross;

      nodes_.resize(k + 1);
      PixelNode child;
      child.d = static_cast<std::uint8_t>(std::min(child_cap, d_edge));
      child.start = child_start;
      nodes_.push_back(child);

      in_i -= need;
      in_dt -= frac;
      continue;
    }
    node.intensity = total;
    node.elapsed += in_dt;
  }
  running_t_ += span;
}

void PixelState::pop_edges(std::vector<Emission>& out) {
  if (config_.discard_after_emit) {
    // Every event must start on an input boundary, so only the leading edge
    // survives; the decoder extends it to the boundary.
    const PixelNode& head = nodes_.front();
    const double t = head.start + head.edge->span;
    emit(head.edge->d, t, out);
    // Bridge to the boundary when rounding up would not reach it.
    if (running_t_ - double(*last_emit_) >= config_.boundary) emit(kFillerD, running_t_, out);
    nodes_.clear();
    return;
  }
  for (const PixelNode& node : nodes_) {
    if (node.edge) emit(node.edge->d, node.start + node.edge->span, out);
  }
  PixelNode tail = nodes_.back();
  nodes_.assign(1, tail);
}

std::optional<Emission> PixelState::enforce_dtmax(std::vector<Emission>& out) {
  if (emitted_at_level_ || !(running_t_ - level_start_ >= config_.dt_max)) {
    return std::nullopt;
  }
  const std::size_t before = out.size();
  const bool has_edges =
      mode_ == PixelMode::List && nodes_.size() > 1 && nodes_.front().edge;
  if (mode_ == PixelMode::Collapse && candidate_) {
    commit_candidate(out);
  } else if (has_edges) {
    pop_edges(out);
    emitted_at_level_ = true;
  } else if (nodes_.empty() || nodes_.front().intensity < 1.0) {
    // Nothing saturated: report darkness at the bound and keep any
    // fractional light for the next event.
    const double t = level_start_ + config_.dt_max;
    emit(kZeroD, t, out);
    if (!nodes_.empty()) {
      nodes_.front().start = t;
      nodes_.front().elapsed = running_t_ - t;
    }
    emitted_at_level_ = true;
  } else {
    PixelNode& node = nodes_.front();
    const int d = floor_log2_clamped(node.intensity);
    emit(static_cast<std::uint8_t>(d), running_t_, out);
    node.intensity -= pow2(d);
    node.start = running_t_;
    node.elapsed = 0.0;
    emitted_at_level_ = true;
    if (config_.discard_after_emit) nodes_.clear();
  }
  if (out.size() == before) return std::nullopt;
  return out.back();
}

void PixelState::flush(std::vector<Emission>& out) {
  if (mode_ == PixelMode::List) {
    const bool has_edges = !nodes_.empty() && nodes_.front().edge.has_value();
    if (has_edges) {
      pop_edges(out);
    } else if (!nodes_.empty() && running_t_ > nodes_.front().start) {
      PixelNode& head = nodes_.front();
      if (head.intensity <= 0.0) {
        emit(kZeroD, running_t_, out);
        nodes_.clear();
      } else if (config_.discard_after_emit) {
        if (head.intensity >= 1.0) {
          emit(static_cast<std::uint8_t>(floor_log2_clamped(head.intensity)),
               running_t_, out);
        }
        nodes_.clear();
      }
    }
    return;
  }

  if (nodes_.empty()) {
    candidate_.reset();
    return;
  }
  const PixelNode& node = nodes_.front();
  if (candidate_) {
    const Candidate cand = *candidate_;
    emit(cand.d, cand.t, out);
    if (std::nearbyint(running_t_) > std::nearbyint(cand.t)) {
      emit(kFillerD, running_t_, out);
    }
  } else if (running_t_ > node.start) {
    if (node.intensity <= 0.0) {
      emit(kZeroD, running_t_, out);
    } else if (emitted_at_level_) {
      emit(kFillerD, running_t_, out);
    } else if (node.intensity >= 1.0) {
      emit(static_cast<std::uint8_t>(floor_log2_clamped(node.intensity)), running_t_,
           out);
    } else {
      emit(kZeroD, running_t_, out);
    }
  }
  nodes_.clear();
  candidate_.reset();
}

void PixelState::tick_sensitivity(double elapsed, const SensitivityParams& params,
                                  double ref_interval) {
  if (elapsed < 0.0) throw Error(ErrorKind::Parameter, "negative elapsed time");
  const double step = double(std::max<std::uint32_t>(params.m_velocity, 1)) * ref_interval;
  growth_ += elapsed;
  const double steps = std::floor(growth_ / step);
  if (steps <= 0.0) return;
  growth_ -= steps * step;
  current_m_ = std::min(current_m_ + steps, std::max(params.m_max, current_m_));
}

void PixelState::apply_application_sensitivity(double target_m) noexcept {
  current_m_ = std::min(current_m_, std::max(0.0, target_m));
}

std::optional<Emission> PixelState::candidate() const {
  if (!candidate_) return std::nullopt;
  return Emission{candidate_->d, to_tick(candidate_->t, true)};
}

std::vector<Emission> PixelState::queued() const {
  std::vector<Emission> out;
  if (mode_ == PixelMode::Collapse) {
    if (auto c = candidate()) out.push_back(*c);
    return out;
  }
  for (const PixelNode& node : nodes_) {
    if (node.edge) out.push_back({node.edge->d, to_tick(node.start + node.edge->span, rounds_to_nearest(mode_, config_))});
  }
  return out;
}

}  // namespace eventforge
