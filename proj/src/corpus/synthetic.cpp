// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>

#include "locqor/corpus.hpp"
#include "locqor/error.hpp"
#include "locqor/util.hpp"

namespace fs = std::filesystem;

namespace locqor::corpus {

namespace {

std::string padded(const char* prefix, int value, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

std::string sig(Rng& rng) { return "s" + std::to_string(rng.below(12)); }

enum class LineKind { kNeutral, kCongestion, kTimingTrigger, kArith };

struct BodyLine {
  std::string text;
  LineKind kind = LineKind::kNeutral;
  int n_mul = 0;
  int n_add = 0;
};

// Neutral templates deliberately repeat verbatim across modules so identical
// lines end up with different neighbor-dependent labels.
std::string neutral_line(Rng& rng) {
  switch (rng.below(9)) {
    case 0:
      return "  always @(posedge clk) begin";
    case 1:
      return "  end";
    case 2:
      return "  reg [7:0] r" + std::to_string(rng.below(8)) + " ;";
    case 3:
      return "  wire w" + std::to_string(rng.below(8)) + " ;";
    case 4:
      return "  assign w" + std::to_string(rng.below(8)) + " = " + sig(rng) + " ^ " + sig(rng) +
             " ;";
    case 5:
      return "    r" + std::to_string(rng.below(8)) + " <= " + sig(rng) + " ;";
    case 6:
      return "  // pipeline stage " + std::to_string(rng.below(4));
    case 7:
      return "";
    default:
      return "  assign y_out = " + sig(rng) + " ;";
  }
}

BodyLine congestion_line(Rng& rng) {
  BodyLine b;
  b.kind = LineKind::kCongestion;
  switch (rng.below(3)) {
    case 0:
      b.text = "  assign c" + std::to_string(rng.below(8)) + " = " + std::string(kCongestionToken) +
               " ^ " + sig(rng) + " ;";
      break;
    case 1:
      b.text = "  wire [63:0] " + std::string(kCongestionToken) + " ;";
      break;
    default:
      b.text = "    r" + std::to_string(rng.below(8)) + " <= " + std::string(kCongestionToken) +
               " ;";
      break;
  }
  return b;
}

BodyLine timing_trigger_line(Rng& rng) {
  BodyLine b;
  b.kind = LineKind::kTimingTrigger;
  if (rng.below(2) == 0) {
    b.text = "  assign t" + std::to_string(rng.below(8)) + " = " + std::string(kTimingToken) +
             " & " + sig(rng) + " ;";
  } else {
    b.text = "    maybe_full <= " + std::string(kTimingToken) + " ;";
  }
  return b;
}

BodyLine arith_line(Rng& rng, double mul_prob) {
  BodyLine b;
  b.kind = LineKind::kArith;
  auto op = [&]() -> std::string {
    if (rng.uniform() < mul_prob) {
      ++b.n_mul;
      return std::string(kMulToken);
    }
    switch (rng.below(3)) {
      case 0:
        ++b.n_add;
        return std::string(kAddToken);
      case 1:
        return "^";
      default:
        return "|";
    }
  };
  std::string a = sig(rng), x = sig(rng), y = sig(rng);
  std::string op1 = op(), op2 = op();
  b.text = "  assign p" + std::to_string(rng.below(8)) + " = " + a + " " + op1 + " " + x + " " +
           op2 + " " + y + " ;";
  return b;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  if (config.n_modules < 1) throw ConfigError("synthetic corpus needs n_modules >= 1");
  if (config.lines_per_module < 7) throw ConfigError("synthetic corpus needs lines_per_module >= 7");
  if (config.modules_per_file < 1 || config.n_designs < 1) {
    throw ConfigError("synthetic corpus needs modules_per_file >= 1 and n_designs >= 1");
  }
  const auto& rules = config.rules;
  Rng rng(config.seed);
  SyntheticCorpus out;

  constexpr double kMulPalette[] = {0.0, 0.35, 0.7};
  const int n_designs = std::min(config.n_designs, config.n_modules);
  std::vector<std::vector<std::string>> design_modules(static_cast<std::size_t>(n_designs));

  for (int m = 0; m < config.n_modules; ++m) {
    const int d = m % n_designs;
    const std::string design_id = padded("syn_d", d, 2);
    const std::string module_id = padded("syn_m", m, 3);
    const double mul_prob = kMulPalette[rng.below(3)];

    std::vector<BodyLine> lines;
    lines.push_back({"module " + module_id + " ("});
    lines.push_back({"  input clk ,"});
    lines.push_back({"  input [31:0] a_in ,"});
    lines.push_back({"  output [31:0] y_out"});
    lines.push_back({");"});
    const int body = config.lines_per_module - 6;
    for (int i = 0; i < body; ++i) {
      double u = rng.uniform();
      if (u < rules.congestion_rate) {
        lines.push_back(congestion_line(rng));
      } else if ((u -= rules.congestion_rate) < rules.timing_trigger_rate) {
        lines.push_back(timing_trigger_line(rng));
      } else if ((u -= rules.timing_trigger_rate) < rules.arith_rate) {
        lines.push_back(arith_line(rng, mul_prob));
      } else {
        lines.push_back({neutral_line(rng)});
      }
    }
    lines.push_back({"endmodule"});

    std::string text;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (i) text += '\n';
      text += lines[i].text;
    }
    design_modules[static_cast<std::size_t>(d)].push_back(text);

    for (std::size_t i = 0; i < lines.size(); ++i) {
      LabelRecord rec;
      rec.design_id = design_id;
      rec.module_id = module_id;
      rec.line_no = static_cast<int>(i) + 1;
      rec.congestion = lines[i].kind == LineKind::kCongestion;
      rec.timing = (i > 0 && lines[i - 1].kind == LineKind::kTimingTrigger) ||
                   (i + 1 < lines.size() && lines[i + 1].kind == LineKind::kTimingTrigger);
      if (lines[i].kind == LineKind::kArith) {
        rec.wns_ns = rules.wns_intercept + rules.wns_per_mul * lines[i].n_mul +
                     rules.wns_per_add * lines[i].n_add;
      }
      if (rec.congestion || rec.timing || rec.wns_ns) out.labels.push_back(std::move(rec));
    }
  }

  for (int d = 0; d < n_designs; ++d) {
    const std::string design_id = padded("syn_d", d, 2);
    const auto& mods = design_modules[static_cast<std::size_t>(d)];
    for (std::size_t f = 0; f * config.modules_per_file < mods.size(); ++f) {
      std::string file = "// generated synthetic corpus, design " + design_id + "\n";
      for (std::size_t j = f * config.modules_per_file;
           j < std::min(mods.size(), (f + 1) * config.modules_per_file); ++j) {
        file += "\n";
        file += mods[j];
        file += "\n";
      }
      out.files[design_id + "/" + padded("part", static_cast<int>(f), 2) + ".v"] = std::move(file);
    }
  }
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const fs::path& corpus_dir,
                            const fs::path& label_path) {
  for (const auto& [rel, contents] : corpus.files) {
    fs::path p = corpus_dir / rel;
    fs::create_directories(p.parent_path());
    write_file(p.string(), contents);
  }
  if (label_path.has_parent_path()) fs::create_directories(label_path.parent_path());
  write_file(label_path.string(), format_labels(corpus.labels));
}

}  // namespace locqor::corpus
