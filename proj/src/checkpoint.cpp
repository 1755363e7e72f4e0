#include "adherelane/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace adherelane::dqn {

namespace {

constexpr const char* kMagic = "adherelane-checkpoint";

void write_tensor(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out << (c ? " " : "") << m(r, c);
    }
    out << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.front() != '#') return std::istringstream(line);
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

void expect(LineReader& lr, std::istringstream& ls, const std::string& kw) {
  std::string tok;
  if (!(ls >> tok) || tok != kw) lr.fail("expected '" + kw + "'");
}

Eigen::MatrixXd read_tensor(LineReader& lr, const std::string& name) {
  auto header = lr.next();
  expect(lr, header, "tensor");
  std::string got;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(header >> got >> rows >> cols) || got != name || rows <= 0 || cols <= 0) {
    lr.fail("bad header for tensor " + name);
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto ls = lr.next();
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(ls >> m(r, c))) lr.fail("tensor " + name + " row too short");
    }
  }
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainState& state) {
  out << std::setprecision(17);
  out << kMagic << " 1\n";
  out << "target " << to_string(state.target) << '\n';
  out << "episodes_done " << state.episodes_done << '\n';
  out << "estimator " << state.estimator.theta_init() << ' ' << state.estimator.n()
      << ' ' << state.estimator.successes() << '\n';
  write_tensor(out, "w1", state.params.w1);
  write_tensor(out, "b1", state.params.b1);
  write_tensor(out, "w2", state.params.w2);
  write_tensor(out, "b2", state.params.b2);
}

TrainState read_checkpoint(std::istream& in) {
  LineReader lr(in);
  TrainState st;

  auto magic = lr.next();
  int version = 0;
  expect(lr, magic, kMagic);
  if (!(magic >> version) || version != 1) lr.fail("unsupported checkpoint version");

  auto target = lr.next();
  expect(lr, target, "target");
  std::string kind;
  target >> kind;
  try {
    st.target = target_from_string(kind);
  } catch (const std::invalid_argument& e) {
    lr.fail(e.what());
  }

  auto eps = lr.next();
  expect(lr, eps, "episodes_done");
  if (!(eps >> st.episodes_done) || st.episodes_done < 0) lr.fail("bad episodes_done");

  auto est = lr.next();
  expect(lr, est, "estimator");
  double theta_init = 0.0;
  std::uint64_t n = 0;
  std::uint64_t successes = 0;
  if (!(est >> theta_init >> n >> successes)) lr.fail("bad estimator record");
  try {
    st.estimator = AdherenceEstimator(theta_init, n, successes);
  } catch (const std::invalid_argument& e) {
    lr.fail(e.what());
  }

  auto read_column = [&](const std::string& name) -> Eigen::VectorXd {
    const Eigen::MatrixXd m = read_tensor(lr, name);
    if (m.cols() != 1) lr.fail("tensor " + name + " must have one column");
    return m.col(0);
  };
  st.params.w1 = read_tensor(lr, "w1");
  st.params.b1 = read_column("b1");
  st.params.w2 = read_tensor(lr, "w2");
  st.params.b2 = read_column("b2");
  const MlpParams& p = st.params;
  if (p.b1.size() != p.w1.rows() || p.w2.cols() != p.w1.rows() ||
      p.b2.size() != p.w2.rows() || p.w1.cols() != static_cast<Eigen::Index>(kObservationSize) ||
      p.w2.rows() != kNumActions) {
    lr.fail("tensor shapes are inconsistent");
  }
  return st;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, state);
  if (!out) throw std::runtime_error("error writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  return read_checkpoint(in);
}

}  // namespace adherelane::dqn
