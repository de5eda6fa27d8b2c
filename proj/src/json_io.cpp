#include "loom/json_io.hpp"

namespace loom {

using nlohmann::json;

json value_to_json(const Value& v) {
  switch (v.kind()) {
    case Value::Kind::Null:
      return nullptr;
    case Value::Kind::Undefined:
      return "undefined";  // traces only; spec files never hold undefined
    case Value::Kind::Cat:
      return v.cat_id();
    case Value::Kind::Num:
      return v.num_value();
    case Value::Kind::Set:
      return v.set_elems();
  }
  return nullptr;
}

Value value_from_json(const json& j, VarKind kind) {
  if (j.is_null()) return Value::null();
  switch (kind) {
    case VarKind::Categorical:
      return Value::cat(j.get<int>());
    case VarKind::Numerical:
      return Value::num(j.get<double>());
    case VarKind::SetVar:
      return Value::set(j.get<std::vector<int>>());
  }
  throw SerializationError("bad value");
}

namespace {

const char* kind_name(VarKind k) {
  switch (k) {
    case VarKind::Categorical:
      return "categorical";
    case VarKind::Numerical:
      return "numerical";
    case VarKind::SetVar:
      return "set";
  }
  return "?";
}

VarKind kind_from_name(const std::string& s) {
  if (s == "categorical") return VarKind::Categorical;
  if (s == "numerical") return VarKind::Numerical;
  if (s == "set") return VarKind::SetVar;
  throw SerializationError("unknown variable kind: " + s);
}

json init_to_json(const VarInit& init, VarKind kind) {
  json j;
  switch (init.kind) {
    case VarInit::Kind::None:
      j["kind"] = "none";
      break;
    case VarInit::Kind::Input:
    case VarInit::Kind::Position: {
      j["kind"] = init.kind == VarInit::Kind::Input ? "input" : "position";
      json t = json::array();
      for (const auto& v : init.table) t.push_back(value_to_json(v));
      j["table"] = std::move(t);
      break;
    }
    case VarInit::Kind::Constant:
      j["kind"] = "constant";
      j["value"] = value_to_json(init.constant);
      break;
  }
  (void)kind;
  return j;
}

VarInit init_from_json(const json& j, VarKind kind) {
  VarInit init;
  std::string k = j.at("kind").get<std::string>();
  if (k == "none") {
    init.kind = VarInit::Kind::None;
  } else if (k == "input" || k == "position") {
    init.kind = k == "input" ? VarInit::Kind::Input : VarInit::Kind::Position;
    for (const auto& e : j.at("table")) {
      init.table.push_back(value_from_json(e, kind));
    }
  } else if (k == "constant") {
    init.kind = VarInit::Kind::Constant;
    init.constant = value_from_json(j.at("value"), kind);
  } else {
    throw SerializationError("unknown init kind: " + k);
  }
  return init;
}

}  // namespace

json spec_to_json(const ProgramSpec& spec) {
  json j;
  json vars = json::array();
  for (const auto& v : spec.variables) {
    json jv;
    jv["name"] = v.name;
    jv["kind"] = kind_name(v.kind);
    switch (v.kind) {
      case VarKind::Categorical:
        jv["range"] = v.range;
        break;
      case VarKind::Numerical:
        jv["buckets"] = v.buckets;
        break;
      case VarKind::SetVar:
        jv["universe_range"] = v.universe_range;
        jv["allowed_sets"] = v.allowed_sets;
        break;
    }
    jv["init"] = init_to_json(v.init, v.kind);
    jv["default"] = value_to_json(v.default_value);
    vars.push_back(std::move(jv));
  }
  j["variables"] = std::move(vars);

  json heads = json::array();
  for (const auto& h : spec.heads) {
    json jh;
    jh["name"] = h.name;
    jh["query"] = h.query;
    jh["key"] = h.key;
    jh["value"] = h.value;
    jh["output_kind"] = kind_name(h.output_kind);
    if (h.output_kind == VarKind::Numerical) {
      jh["output_buckets"] = h.output_buckets;
    } else {
      jh["output_range"] = h.output_range;
    }
    if (h.relative_mask) {
      jh["relative_mask"] =
          std::vector<int>(h.relative_mask->begin(), h.relative_mask->end());
    }
    heads.push_back(std::move(jh));
  }
  j["heads"] = std::move(heads);

  json rules = json::array();
  for (const auto& r : spec.rules) {
    json jr;
    json ante = json::array();
    for (const auto& c : r.antecedent) {
      ante.push_back(json{{"value", c.value}, {"var", c.var}});
    }
    jr["antecedent"] = std::move(ante);
    jr["output"] = r.output_var;
    jr["old"] = r.old_value;
    if (r.new_value == TransitionRule::kNullValue) {
      jr["new"] = nullptr;
    } else {
      jr["new"] = r.new_value;
    }
    jr["reset"] = r.is_reset;
    rules.push_back(std::move(jr));
  }
  j["rules"] = std::move(rules);

  j["output"] = spec.output_var;
  if (spec.halt) {
    j["halt"] = json{{"value", spec.halt->value}, {"var", spec.halt->var}};
  } else {
    j["halt"] = nullptr;
  }
  j["input_range"] = spec.input_range;
  if (spec.position_range) {
    j["position_range"] = *spec.position_range;
  } else {
    j["position_range"] = nullptr;
  }
  if (spec.default_max_layers) {
    j["default_max_layers"] = *spec.default_max_layers;
  }
  return j;
}

ProgramSpec spec_from_json(const json& j) {
  ProgramSpec spec;
  for (const auto& jv : j.at("variables")) {
    VariableSpec v;
    v.name = jv.at("name").get<std::string>();
    v.kind = kind_from_name(jv.at("kind").get<std::string>());
    switch (v.kind) {
      case VarKind::Categorical:
        v.range = jv.at("range").get<int>();
        break;
      case VarKind::Numerical:
        v.buckets = jv.at("buckets").get<std::vector<double>>();
        break;
      case VarKind::SetVar:
        v.universe_range = jv.at("universe_range").get<int>();
        v.allowed_sets =
            jv.at("allowed_sets").get<std::vector<std::vector<int>>>();
        break;
    }
    v.init = init_from_json(jv.at("init"), v.kind);
    v.default_value = value_from_json(jv.at("default"), v.kind);
    spec.variables.push_back(std::move(v));
  }
  for (const auto& jh : j.at("heads")) {
    AttentionHeadSpec h;
    h.name = jh.at("name").get<std::string>();
    h.query = jh.at("query").get<std::string>();
    h.key = jh.at("key").get<std::string>();
    h.value = jh.at("value").get<std::string>();
    h.output_kind = kind_from_name(jh.at("output_kind").get<std::string>());
    if (h.output_kind == VarKind::Numerical) {
      h.output_buckets = jh.at("output_buckets").get<std::vector<double>>();
    } else {
      h.output_range = jh.at("output_range").get<int>();
    }
    if (jh.contains("relative_mask")) {
      auto v = jh.at("relative_mask").get<std::vector<int>>();
      h.relative_mask = std::set<int>(v.begin(), v.end());
    }
    spec.heads.push_back(std::move(h));
  }
  for (const auto& jr : j.at("rules")) {
    TransitionRule r;
    for (const auto& jc : jr.at("antecedent")) {
      r.antecedent.push_back(
          {jc.at("var").get<std::string>(), jc.at("value").get<int>()});
    }
    r.output_var = jr.at("output").get<std::string>();
    r.old_value = jr.at("old").get<int>();
    r.new_value = jr.at("new").is_null() ? TransitionRule::kNullValue
                                         : jr.at("new").get<int>();
    r.is_reset = jr.at("reset").get<bool>();
    spec.rules.push_back(std::move(r));
  }
  spec.output_var = j.at("output").get<std::string>();
  if (!j.at("halt").is_null()) {
    spec.halt = HaltSpec{j.at("halt").at("var").get<std::string>(),
                         j.at("halt").at("value").get<int>()};
  }
  spec.input_range = j.at("input_range").get<int>();
  if (!j.at("position_range").is_null()) {
    spec.position_range = j.at("position_range").get<int>();
  }
  if (j.contains("default_max_layers")) {
    spec.default_max_layers = j.at("default_max_layers").get<int>();
  }
  return spec;
}

std::string spec_to_string(const ProgramSpec& spec) {
  return spec_to_json(spec).dump(2);
}

ProgramSpec spec_from_string(const std::string& text) {
  return spec_from_json(json::parse(text));
}

}  // namespace loom
