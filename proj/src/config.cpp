#include "gpa/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace gpa {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t pos;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("config: bad numeric value '" + v + "' for " + key);
  }
}

int to_int(const std::string& v, const std::string& key) {
  const double d = to_double(v, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw ParseError("config: expected integer for " + key);
  return i;
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: expected boolean for " + key);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

KeyValues parse_config_text(const std::string& text, const std::string& context) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(context + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParseError(context + ":" + std::to_string(line_no) + ": empty key or value");
    out.emplace_back(key, value);
  }
  return out;
}

KeyValues parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_config(RunConfig* cfg, const KeyValues& kv, const std::string& context) {
  for (const auto& [key, value] : kv) {
    if (key == "window.len") cfg->window.window_len = to_int(value, key);
    else if (key == "window.stride") cfg->window.stride = to_int(value, key);
    else if (key == "window.anchors") cfg->window.num_anchors = to_int(value, key);
    else if (key == "window.temporal_stride") cfg->window.temporal_stride = to_int(value, key);
    else if (key == "window.sample_anchors") cfg->sample_window_anchors = to_bool(value, key);
    else if (key == "loss.mu") cfg->loss.mu = to_double(value, key);
    else if (key == "loss.lambda_geo") cfg->loss.lambda_geo = to_double(value, key);
    else if (key == "loss.lambda_smooth") cfg->loss.lambda_smooth = to_double(value, key);
    else if (key == "loss.delta") cfg->loss.delta = to_double(value, key);
    else if (key == "loss.epsilon") cfg->loss.epsilon = to_double(value, key);
    else if (key == "loss.smooth_unmasked") cfg->loss.smooth_unmasked = to_bool(value, key);
    else if (key == "optim.max_iters") cfg->optim.max_iters = to_int(value, key);
    else if (key == "optim.step_size") cfg->optim.step_size = to_double(value, key);
    else if (key == "optim.decay") cfg->optim.decay = to_double(value, key);
    else if (key == "optim.grad_tol") cfg->optim.grad_tol = to_double(value, key);
    else if (key == "optim.depth_lr_scale") cfg->optim.depth_lr_scale = to_double(value, key);
    else if (key == "optim.optimize_pose") cfg->optim.optimize_pose = to_bool(value, key);
    else if (key == "optim.optimize_depth") cfg->optim.optimize_depth = to_bool(value, key);
    else if (key == "chain.mode") {
      if (value == "rigid") cfg->chain_mode = ChainMode::Rigid;
      else if (value == "similarity") cfg->chain_mode = ChainMode::Similarity;
      else throw ParseError(context + ": chain.mode must be rigid or similarity");
    } else if (key == "resize.width") cfg->resize_w = to_int(value, key);
    else if (key == "resize.height") cfg->resize_h = to_int(value, key);
    else if (key == "run.output_dir") cfg->output_dir = value;
    else if (key == "run.seed") cfg->seed = static_cast<uint64_t>(to_double(value, key));
    else if (key == "run.color") cfg->color = to_bool(value, key);
    else if (key == "init.strategy") {
      if (value == "constant") cfg->init_strategy = InitStrategy::ConstantDepth;
      else if (value == "gt-perturbed") cfg->init_strategy = InitStrategy::GroundTruthPerturbed;
      else if (value == "files") cfg->init_strategy = InitStrategy::FileProvided;
      else throw ParseError(context + ": unknown init.strategy " + value);
    } else if (key == "init.depth_guess") cfg->init_depth_guess = to_double(value, key);
    else if (key == "init.pose_noise_m") cfg->init_pose_noise_m = to_double(value, key);
    else if (key == "init.rot_noise_deg") cfg->init_rot_noise_deg = to_double(value, key);
    else if (key == "init.depth_noise") cfg->init_depth_noise = to_double(value, key);
    else if (key == "init.pose_file") cfg->init_pose_file = value;
    else if (key == "frames.begin") cfg->frame_begin = to_int(value, key);
    else if (key == "frames.end") cfg->frame_end = to_int(value, key);
    else if (key == "eval.rpe_delta") cfg->rpe_delta = to_int(value, key);
    else if (key == "eval.align") {
      if (value == "rigid") cfg->eval_align = AlignMode::Rigid;
      else if (value == "similarity") cfg->eval_align = AlignMode::Similarity;
      else throw ParseError(context + ": eval.align must be rigid or similarity");
    } else {
      throw ParseError(context + ": unknown config key " + key);
    }
  }
}

RunConfig parse_run_config(const KeyValues& kv, const std::string& context) {
  RunConfig cfg;
  apply_config(&cfg, kv, context);
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  window.validate();
  loss.validate();
  optim.validate();
  if ((resize_w != 0) != (resize_h != 0))
    throw InvalidArgument("RunConfig: resize needs both width and height");
  if (resize_w != 0 && (resize_w < 32 || resize_h < 32))
    throw InvalidArgument("RunConfig: resize dimensions must be >= 32");
  if (init_depth_guess <= 0)
    throw InvalidArgument("RunConfig: init.depth_guess must be positive");
  if (frame_begin < 0) throw InvalidArgument("RunConfig: frames.begin must be >= 0");
  if (frame_end != -1 && frame_end <= frame_begin)
    throw InvalidArgument("RunConfig: frames.end must exceed frames.begin");
  if (rpe_delta < 1) throw InvalidArgument("RunConfig: eval.rpe_delta must be >= 1");
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  auto put = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  put("window.len", std::to_string(cfg.window.window_len));
  put("window.stride", std::to_string(cfg.window.stride));
  put("window.anchors", std::to_string(cfg.window.num_anchors));
  put("window.temporal_stride", std::to_string(cfg.window.temporal_stride));
  put("window.sample_anchors", cfg.sample_window_anchors ? "true" : "false");
  put("loss.mu", fmt(cfg.loss.mu));
  put("loss.lambda_geo", fmt(cfg.loss.lambda_geo));
  put("loss.lambda_smooth", fmt(cfg.loss.lambda_smooth));
  put("loss.delta", fmt(cfg.loss.delta));
  put("loss.epsilon", fmt(cfg.loss.epsilon));
  put("loss.smooth_unmasked", cfg.loss.smooth_unmasked ? "true" : "false");
  put("optim.max_iters", std::to_string(cfg.optim.max_iters));
  put("optim.step_size", fmt(cfg.optim.step_size));
  put("optim.decay", fmt(cfg.optim.decay));
  put("optim.grad_tol", fmt(cfg.optim.grad_tol));
  put("optim.depth_lr_scale", fmt(cfg.optim.depth_lr_scale));
  put("optim.optimize_pose", cfg.optim.optimize_pose ? "true" : "false");
  put("optim.optimize_depth", cfg.optim.optimize_depth ? "true" : "false");
  put("chain.mode", cfg.chain_mode == ChainMode::Rigid ? "rigid" : "similarity");
  put("resize.width", std::to_string(cfg.resize_w));
  put("resize.height", std::to_string(cfg.resize_h));
  put("run.output_dir", cfg.output_dir);
  put("run.seed", std::to_string(cfg.seed));
  put("run.color", cfg.color ? "true" : "false");
  switch (cfg.init_strategy) {
    case InitStrategy::ConstantDepth: put("init.strategy", "constant"); break;
    case InitStrategy::GroundTruthPerturbed: put("init.strategy", "gt-perturbed"); break;
    case InitStrategy::FileProvided: put("init.strategy", "files"); break;
  }
  put("init.depth_guess", fmt(cfg.init_depth_guess));
  put("init.pose_noise_m", fmt(cfg.init_pose_noise_m));
  put("init.rot_noise_deg", fmt(cfg.init_rot_noise_deg));
  put("init.depth_noise", fmt(cfg.init_depth_noise));
  if (!cfg.init_pose_file.empty()) put("init.pose_file", cfg.init_pose_file);
  put("frames.begin", std::to_string(cfg.frame_begin));
  put("frames.end", std::to_string(cfg.frame_end));
  put("eval.rpe_delta", std::to_string(cfg.rpe_delta));
  put("eval.align", cfg.eval_align == AlignMode::Rigid ? "rigid" : "similarity");
  return out;
}

}  // namespace gpa
