#pragma once

// Hand-built traces for learner, monitor and metric tests.

#include <string>
#include <vector>

#include "apsmon/trace.hpp"

namespace fixture {

struct Column {
  std::vector<double> bg, iob, cmd;
  std::vector<apsmon::Hazard> label;
};

inline apsmon::Trace make_trace(const Column& c, std::string id = "s0",
                                std::string patient = "p") {
  apsmon::Trace tr;
  tr.header.scenario_id = std::move(id);
  tr.header.patient = std::move(patient);
  tr.header.basal_rate = 1.0;
  tr.header.epsilon_action = 0.05;
  tr.header.dt = 5.0;
  for (std::size_t i = 0; i < c.bg.size(); ++i) {
    apsmon::TraceRow r;
    r.t = 5.0 * static_cast<double>(i);
    r.true_bg = r.seen_bg = c.bg[i];
    r.iob = c.iob[i];
    r.raw_cmd = r.delivered_cmd = c.cmd[i];
    r.label = c.label[i];
    tr.rows.push_back(r);
  }
  return tr;
}

/// 20 steps of rising BG above target with falling IOB; the command is a
/// decrease at steps 5..7 and H2 is labeled from step 10.
inline apsmon::Trace rising_h2(double iob_offset = 0.0, std::string id = "s0") {
  Column c;
  for (int i = 0; i < 20; ++i) {
    c.bg.push_back(150.0 + 2.0 * i);
    c.iob.push_back(3.0 + iob_offset - 0.1 * i);
    c.cmd.push_back(i >= 5 && i <= 7 ? 0.5 : 1.0);
    c.label.push_back(i >= 10 ? apsmon::Hazard::H2 : apsmon::Hazard::None);
  }
  return make_trace(c, std::move(id));
}

/// 20 steps of BG falling from 110 with falling IOB while the command
/// increases insulin; H1 is labeled from step 12.
inline apsmon::Trace falling_h1(std::string id = "s1") {
  Column c;
  for (int i = 0; i < 20; ++i) {
    c.bg.push_back(110.0 - 4.0 * i);
    c.iob.push_back(4.0 - 0.1 * i);
    c.cmd.push_back(2.0);
    c.label.push_back(i >= 12 ? apsmon::Hazard::H1 : apsmon::Hazard::None);
  }
  return make_trace(c, std::move(id));
}

}  // namespace fixture
