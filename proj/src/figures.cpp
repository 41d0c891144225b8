#include "safetrack/pipeline.hpp"

#include <fstream>
#include <sstream>

namespace safetrack {

namespace fs = std::filesystem;

namespace {

constexpr int kMaxDrawnRollouts = 100;

// Maps the operating domain's (x1, x2) face onto the canvas.
struct Canvas {
  double x0, y0, sx, sy, pad = 30.0;
  double width, height;

  Canvas(const Box& domain, double pixels_per_unit) {
    x0 = domain.lower()(0);
    y0 = domain.lower()(1);
    sx = pixels_per_unit;
    sy = pixels_per_unit;
    width = (domain.upper()(0) - x0) * sx + 2 * pad;
    height = (domain.upper()(1) - y0) * sy + 2 * pad;
  }
  double px(double x) const { return pad + (x - x0) * sx; }
  double py(double y) const { return height - pad - (y - y0) * sy; }
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string rect(const Canvas& c, const Box& b, const std::string& style) {
  std::ostringstream os;
  os << "<rect x=\"" << num(c.px(b.lower()(0))) << "\" y=\"" << num(c.py(b.upper()(1))) << "\" width=\""
     << num((b.upper()(0) - b.lower()(0)) * c.sx) << "\" height=\"" << num((b.upper()(1) - b.lower()(1)) * c.sy)
     << "\" " << style << "/>\n";
  return os.str();
}

template <typename Points>
std::string poly(const Canvas& c, const Points& pts, bool closed, const std::string& style) {
  std::ostringstream os;
  os << '<' << (closed ? "polygon" : "polyline") << " points=\"";
  bool first = true;
  for (const auto& p : pts) {
    os << (first ? "" : " ") << num(c.px(p(0))) << ',' << num(c.py(p(1)));
    first = false;
  }
  os << "\" " << style << "/>\n";
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

void write_figures(const fs::path& dir, const ExperimentConfig& cfg, const NominalTrajectory& traj,
                   const BrsResult& brs, const SafeSetSequence& safe, const std::vector<Trajectory>& rollouts,
                   const std::vector<double>& scores) {
  fs::create_directories(dir);
  const ProblemSpec& spec = cfg.problem;
  const Canvas c(spec.operating, 200.0);

  std::ostringstream outlines_csv;
  outlines_csv << "k,vertex,x1,x2\n";
  std::vector<std::vector<Eigen::Vector2d>> outlines;
  for (std::size_t k = 0; k < brs.lambda.size(); ++k) {
    outlines.push_back(projected_outline(brs.lambda[k], 0, 1));
    for (std::size_t v = 0; v < outlines.back().size(); ++v)
      outlines_csv << k << ',' << v << ',' << format_double(outlines.back()[v](0)) << ','
                   << format_double(outlines.back()[v](1)) << '\n';
  }
  write_file(dir / "lambda_outlines.csv", outlines_csv.str());

  std::ostringstream safe_csv;
  safe_csv << "k";
  for (int i = 0; i < traj.state_dim(); ++i) safe_csv << ",lower" << i + 1 << ",upper" << i + 1;
  safe_csv << '\n';
  for (std::size_t k = 0; k < safe.boxes.size(); ++k) {
    safe_csv << k;
    for (int i = 0; i < traj.state_dim(); ++i)
      safe_csv << ',' << format_double(safe.boxes[k].lower()(i)) << ',' << format_double(safe.boxes[k].upper()(i));
    safe_csv << '\n';
  }
  write_file(dir / "safe_sets.csv", safe_csv.str());

  std::ostringstream score_csv;
  score_csv << "rollout,seed,score\n";
  for (std::size_t r = 0; r < scores.size(); ++r)
    score_csv << r << ',' << rollouts[r].seed << ',' << format_double(scores[r]) << '\n';
  write_file(dir / "scores.csv", score_csv.str());

  const std::size_t drawn = std::min<std::size_t>(rollouts.size(), kMaxDrawnRollouts);
  std::ostringstream traces_csv;
  traces_csv << "rollout,k,x1,x2\n";
  for (std::size_t r = 0; r < drawn; ++r)
    for (std::size_t k = 0; k < rollouts[r].states.size(); ++k)
      traces_csv << r << ',' << k << ',' << format_double(rollouts[r].states[k](0)) << ','
                 << format_double(rollouts[r].states[k](1)) << '\n';
  write_file(dir / "rollout_traces.csv", traces_csv.str());

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(c.width) << "\" height=\"" << num(c.height)
      << "\" viewBox=\"0 0 " << num(c.width) << ' ' << num(c.height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << rect(c, spec.operating, "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");
  for (const Box& b : spec.unsafe.pieces) svg << rect(c, b, "fill=\"#c0392b\" fill-opacity=\"0.6\" stroke=\"none\"");
  svg << rect(c, spec.target, "fill=\"#27ae60\" fill-opacity=\"0.35\" stroke=\"#27ae60\"");
  svg << "<g id=\"safe-sets\">\n";
  for (const Box& b : safe.boxes)
    svg << rect(c, b, "fill=\"none\" stroke=\"#7f8c8d\" stroke-width=\"0.5\" stroke-dasharray=\"3,2\"");
  svg << "</g>\n<g id=\"lambda\">\n";
  for (const auto& o : outlines)
    svg << poly(c, o, true, "fill=\"#2980b9\" fill-opacity=\"0.15\" stroke=\"#2980b9\" stroke-width=\"0.6\"");
  svg << "</g>\n<g id=\"rollouts\">\n";
  for (std::size_t r = 0; r < drawn; ++r) {
    std::vector<Eigen::Vector2d> pts;
    for (const Vec& x : rollouts[r].states) pts.emplace_back(x(0), x(1));
    const bool bad = r < scores.size() && scores[r] > 0.0;
    svg << poly(c, pts, false,
                std::string("fill=\"none\" stroke=\"") + (bad ? "#e67e22" : "#95a5a6") +
                    "\" stroke-width=\"0.5\" stroke-opacity=\"0.7\"");
  }
  svg << "</g>\n";
  std::vector<Eigen::Vector2d> nominal;
  for (const Vec& x : traj.states) nominal.emplace_back(x(0), x(1));
  svg << poly(c, nominal, false, "id=\"nominal\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");
  svg << "</svg>\n";
  write_file(dir / "xy_projection.svg", svg.str());
}

}  // namespace safetrack
