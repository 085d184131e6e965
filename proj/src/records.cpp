#include "smart_rar/records.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "smart_rar/errors.hpp"

namespace smart_rar {

namespace {

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string vec_to_json(const Eigen::VectorXd& v) {
  if (v.size() == 0) return "";
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_full(v[i]);
  }
  out += "]";
  return out;
}

Eigen::VectorXd vec_from_json(const std::string& s) {
  if (s.empty()) return Eigen::VectorXd();
  if (s.front() != '[' || s.back() != ']') throw CorruptRecordError("bad probability array: " + s);
  std::vector<double> vals;
  std::string body = s.substr(1, s.size() - 2);
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) vals.push_back(std::stod(tok));
  }
  Eigen::VectorXd v(static_cast<int>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) v[static_cast<int>(i)] = vals[i];
  return v;
}

// Split one CSV line honoring double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

template <typename T>
std::string opt_str(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_same_v<T, double>) return fmt_full(*v);
  else return std::to_string(*v);
}

}  // namespace

SubjectRecord SubjectRecord::frozen_at(int week) const {
  SubjectRecord out = *this;
  if (stage2_week && *stage2_week > week) {
    out.kappa = 1;
    out.stage2_week.reset();
    out.x21.reset();
    out.response.reset();
    out.a2.reset();
    out.p2.resize(0);
    out.outcome_week.reset();
    out.delta = 0;
    out.y.reset();
    return out;
  }
  // Records without an outcome_week tag are treated as final.
  if (delta == 1 && outcome_week && *outcome_week > week) {
    out.delta = 0;
    out.y.reset();
  }
  return out;
}

std::string SubjectRecord::csv_header() {
  return "id,tau,kappa,gamma,delta,x1,a1,stage2_week,x21,response,a2,y,p1_json,p2_json,assigned_regime";
}

std::string SubjectRecord::to_csv_row() const {
  std::string out;
  out += std::to_string(id) + ",";
  out += std::to_string(tau) + ",";
  out += std::to_string(kappa) + ",";
  out += std::to_string(gamma) + ",";
  out += std::to_string(delta) + ",";
  out += fmt_full(x1) + ",";
  out += std::to_string(a1) + ",";
  out += opt_str(stage2_week) + ",";
  out += opt_str(x21) + ",";
  out += opt_str(response) + ",";
  out += opt_str(a2) + ",";
  out += opt_str(y) + ",";
  out += "\"" + vec_to_json(p1) + "\",";
  out += "\"" + vec_to_json(p2) + "\",";
  out += opt_str(assigned_regime);
  return out;
}

SubjectRecord SubjectRecord::from_csv_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 15) throw CorruptRecordError("subject row needs 15 fields, got " +
                                               std::to_string(f.size()));
  SubjectRecord r;
  r.id = std::stoi(f[0]);
  r.tau = std::stoi(f[1]);
  r.kappa = std::stoi(f[2]);
  r.gamma = std::stoi(f[3]);
  r.delta = std::stoi(f[4]);
  r.x1 = std::stod(f[5]);
  r.a1 = std::stoi(f[6]);
  if (!f[7].empty()) r.stage2_week = std::stoi(f[7]);
  if (!f[8].empty()) r.x21 = std::stod(f[8]);
  if (!f[9].empty()) r.response = std::stoi(f[9]);
  if (!f[10].empty()) r.a2 = std::stoi(f[10]);
  if (!f[11].empty()) r.y = std::stod(f[11]);
  r.p1 = vec_from_json(f[12]);
  r.p2 = vec_from_json(f[13]);
  if (!f[14].empty()) r.assigned_regime = std::stoi(f[14]);
  return r;
}

int AccruedDataset::n_completers() const {
  int n = 0;
  for (const auto& r : records) n += r.delta;
  return n;
}

namespace {

void check_prob_vector(const Eigen::VectorXd& p, const char* which, int id) {
  const std::string tag = std::string(which) + " of subject " + std::to_string(id);
  if (p.size() == 0) throw CorruptRecordError(tag + " is empty");
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    // Positivity: single-option vectors are the only place 1.0 can appear.
    if (!(p[i] > 0.0 && (p[i] < 1.0 || p.size() == 1)))
      throw CorruptRecordError(tag + " has entry outside (0,1)");
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw CorruptRecordError(tag + " does not sum to 1");
}

}  // namespace

void AccruedDataset::validate() const {
  for (const auto& r : records) {
    if (r.gamma != 1) throw CorruptRecordError("snapshot contains non-enrolled subject");
    if (r.tau > week - 1) throw CorruptRecordError("subject enrolled after the snapshot week");
    check_prob_vector(r.p1, "p1", r.id);
    if (r.delta == 1) {
      if (r.kappa != 2 || !r.y)
        throw CorruptRecordError("completed subject " + std::to_string(r.id) +
                                 " lacks stage-2 state or outcome");
    }
    if (r.kappa > 1) {
      if (!r.x21 || !r.response || !r.a2)
        throw CorruptRecordError("stage-2 subject " + std::to_string(r.id) +
                                 " missing stage-2 fields");
      check_prob_vector(r.p2, "p2", r.id);
    }
  }
}

AccruedDataset accrued_at(const std::vector<SubjectRecord>& all, int decision_week) {
  AccruedDataset out;
  out.week = decision_week;
  const int frozen = decision_week - 1;
  for (const auto& r : all) {
    if (r.tau > frozen) continue;
    out.records.push_back(r.frozen_at(frozen));
  }
  return out;
}

}  // namespace smart_rar
