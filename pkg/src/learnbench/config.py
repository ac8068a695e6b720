"""Experiment-matrix config files: the spreadsheet replacement.

Two formats are accepted: a TOML file with ``[[row]]`` tables, and a CSV
export mirroring the original spreadsheet columns (problem class, prior,
measurement budget, belief model, offline/online, number of policies, then
one policy token per column).  Parsing resolves every token and reports
errors with row/column coordinates.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .beliefs import CORRELATED, INDEPENDENT
from .harness import OFFLINE, ONLINE, PolicySpec
from .policies import is_tunable, known_policy, policy_class
from .priors import DEFAULT, GIVEN, MLE, UNINFORMATIVE, PriorSpec
from .problems import ProblemClassSpec, check_spec, has_default_prior, known_problem


class ConfigError(ValueError):
    """A malformed or unresolvable experiment config."""


@dataclass(frozen=True)
class ConfigRow:
    """One comparison row, fully resolved."""

    problem: ProblemClassSpec
    prior: PriorSpec
    budget_ratio: float
    belief: str
    objective: str
    policies: tuple[PolicySpec, ...]


_TOKEN_RE = re.compile(r"^\s*([^()\s][^()]*?)\s*(?:\((.*)\))?\s*$")

_PRIOR_NAMES = {
    "uninform": UNINFORMATIVE,
    "uninformative": UNINFORMATIVE,
    "mle": MLE,
    "default": DEFAULT,
    "given": GIVEN,
}

_BELIEF_NAMES = {"independent": INDEPENDENT, "correlated": CORRELATED}
_OBJECTIVE_NAMES = {"offline": OFFLINE, "online": ONLINE}


def _where(row: int, column: str) -> str:
    return f"row {row}, column {column!r}"


def parse_policy_token(token: str, row: int = 0) -> PolicySpec:
    match = _TOKEN_RE.match(token)
    if not match:
        raise ConfigError(f"{_where(row, 'policies')}: malformed policy token {token!r}")
    name, arg = match.group(1), match.group(2)
    if not known_policy(name):
        raise ConfigError(f"{_where(row, 'policies')}: unknown policy {name!r}")
    canonical = policy_class(name).policy_name
    if arg is None:
        return PolicySpec(canonical)
    arg = arg.strip()
    if arg == "*":
        if not is_tunable(name):
            raise ConfigError(
                f"{_where(row, 'policies')}: nothing to tune, {canonical} has no tunable parameter"
            )
        return PolicySpec(canonical, "tune")
    try:
        value = float(arg)
    except ValueError:
        raise ConfigError(
            f"{_where(row, 'policies')}: malformed parameter directive {token!r}"
        ) from None
    if not is_tunable(name):
        raise ConfigError(
            f"{_where(row, 'policies')}: {canonical} does not take a parameter"
        )
    try:
        policy_class(name).check_param(value)
        return PolicySpec(canonical, "fixed", value)
    except ValueError as exc:
        raise ConfigError(f"{_where(row, 'policies')}: {exc}") from None


def parse_problem_token(token: str, row: int = 0) -> ProblemClassSpec:
    match = _TOKEN_RE.match(token)
    if not match:
        raise ConfigError(f"{_where(row, 'problem_class')}: malformed problem token {token!r}")
    name, arg = match.group(1), match.group(2)
    params: tuple[float, ...] = ()
    if arg is not None:
        try:
            params = tuple(float(v) for v in re.split(r"[;,]", arg) if v.strip())
        except ValueError:
            raise ConfigError(
                f"{_where(row, 'problem_class')}: non-numeric problem parameters in {token!r}"
            ) from None
    if not known_problem(name):
        raise ConfigError(f"{_where(row, 'problem_class')}: unknown problem class {name!r}")
    spec = ProblemClassSpec(name, params)
    try:
        check_spec(spec)
    except ValueError as exc:
        raise ConfigError(f"{_where(row, 'problem_class')}: {exc}") from None
    return spec


def parse_prior_token(token: str, problem: ProblemClassSpec, base_dir: Path, row: int = 0) -> PriorSpec:
    match = _TOKEN_RE.match(token)
    if not match:
        raise ConfigError(f"{_where(row, 'prior')}: malformed prior token {token!r}")
    name, arg = match.group(1), match.group(2)
    mode = _PRIOR_NAMES.get(name.strip().lower())
    if mode is None:
        raise ConfigError(f"{_where(row, 'prior')}: unknown prior mode {token!r}")
    if mode != GIVEN and arg is not None:
        raise ConfigError(f"{_where(row, 'prior')}: only Given takes a file argument")
    if mode == DEFAULT and not has_default_prior(problem.name):
        raise ConfigError(
            f"{_where(row, 'prior')}: Default can be used only for problems with a default prior"
        )
    if mode != GIVEN:
        return PriorSpec(mode)
    if arg is not None:
        path = (base_dir / arg.strip()).resolve()
        if not path.is_file():
            raise ConfigError(f"{_where(row, 'prior')}: prior file {str(path)!r} not found")
        return PriorSpec(GIVEN, path=str(path))
    implicit = (base_dir / f"Prior_{problem.name}.csv").resolve()
    if implicit.is_file():
        return PriorSpec(GIVEN, path=str(implicit))
    if has_default_prior(problem.name):
        return PriorSpec(GIVEN)
    raise ConfigError(
        f"{_where(row, 'prior')}: Given requires a prior file "
        f"(looked for {str(implicit)!r}) or a problem class that defines its prior"
    )


def _build_row(
    row_index: int,
    problem_token: str,
    prior_token: str,
    budget_raw,
    belief_raw: str,
    objective_raw: str,
    policy_tokens: list[str],
    base_dir: Path,
) -> ConfigRow:
    problem = parse_problem_token(str(problem_token), row_index)
    prior = parse_prior_token(str(prior_token), problem, base_dir, row_index)
    try:
        budget = float(budget_raw)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{_where(row_index, 'measurement_budget')}: not a number: {budget_raw!r}"
        ) from None
    if budget <= 0:
        raise ConfigError(f"{_where(row_index, 'measurement_budget')}: must be positive")
    belief = _BELIEF_NAMES.get(str(belief_raw).strip().lower())
    if belief is None:
        raise ConfigError(
            f"{_where(row_index, 'belief_model')}: expected independent or correlated, "
            f"got {belief_raw!r}"
        )
    objective = _OBJECTIVE_NAMES.get(str(objective_raw).strip().lower())
    if objective is None:
        raise ConfigError(
            f"{_where(row_index, 'objective')}: expected Offline or Online, got {objective_raw!r}"
        )
    if prior.mode == UNINFORMATIVE and belief == CORRELATED:
        raise ConfigError(
            f"{_where(row_index, 'prior')}: uninformative priors are undefined for "
            "correlated beliefs"
        )
    if not policy_tokens:
        raise ConfigError(f"{_where(row_index, 'policies')}: at least one policy is required")
    policies = tuple(parse_policy_token(tok, row_index) for tok in policy_tokens)
    if belief == INDEPENDENT and any(p.name == "KGCB" for p in policies):
        raise ConfigError(
            f"{_where(row_index, 'policies')}: KGCB requires the correlated belief model"
        )
    return ConfigRow(problem, prior, budget, belief, objective, policies)


def parse_config(path) -> list[ConfigRow]:
    """Parse and fully validate a TOML or CSV experiment config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return _parse_csv(text, path.parent)
    return _parse_toml(text, path.parent)


def _parse_toml(text: str, base_dir: Path) -> list[ConfigRow]:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    raw_rows = data.get("row")
    if not raw_rows:
        raise ConfigError("config defines no [[row]] tables")
    rows = []
    for i, raw in enumerate(raw_rows, start=1):
        missing = [k for k in ("problem", "prior", "budget", "belief", "objective", "policies") if k not in raw]
        if missing:
            raise ConfigError(f"row {i}: missing keys {missing}")
        policies = raw["policies"]
        if not isinstance(policies, list):
            raise ConfigError(f"{_where(i, 'policies')}: expected an array of tokens")
        rows.append(
            _build_row(
                i,
                raw["problem"],
                raw["prior"],
                raw["budget"],
                raw["belief"],
                raw["objective"],
                [str(p) for p in policies],
                base_dir,
            )
        )
    return rows


def _parse_csv(text: str, base_dir: Path) -> list[ConfigRow]:
    reader = csv.reader(text.splitlines())
    rows = []
    row_index = 0
    header_seen = False
    for cells in reader:
        if not cells or all(not c.strip() for c in cells):
            continue
        if not header_seen and "problem" in cells[0].strip().lower():
            header_seen = True
            continue
        row_index += 1
        cells = [c.strip() for c in cells]
        if len(cells) < 7:
            raise ConfigError(f"row {row_index}: expected at least 7 columns, got {len(cells)}")
        try:
            declared = int(cells[5])
        except ValueError:
            raise ConfigError(
                f"{_where(row_index, 'number_of_policies')}: not an integer: {cells[5]!r}"
            ) from None
        policy_tokens = [c for c in cells[6:] if c]
        if len(policy_tokens) != declared:
            raise ConfigError(
                f"{_where(row_index, 'number_of_policies')}: declared {declared} policies "
                f"but found {len(policy_tokens)}"
            )
        rows.append(
            _build_row(
                row_index, cells[0], cells[1], cells[2], cells[3], cells[4], policy_tokens, base_dir
            )
        )
    if not rows:
        raise ConfigError("config defines no rows")
    return rows


# ---------------------------------------------------------------------------
# Serialization (canonical TOML)
# ---------------------------------------------------------------------------

def _toml_str(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def problem_token(spec: ProblemClassSpec) -> str:
    if spec.params:
        return f"{spec.name}({','.join(repr(p) for p in spec.params)})"
    return spec.name


def prior_token(spec: PriorSpec) -> str:
    names = {UNINFORMATIVE: "Uninform", MLE: "MLE", DEFAULT: "Default", GIVEN: "Given"}
    token = names[spec.mode]
    if spec.mode == GIVEN and spec.path is not None:
        return f"{token}({spec.path})"
    return token


def serialize_config(rows: list[ConfigRow]) -> str:
    """Render rows as canonical TOML; ``parse -> serialize -> parse`` is a
    fixed point."""
    parts = []
    for row in rows:
        belief = "independent" if row.belief == INDEPENDENT else "correlated"
        objective = "offline" if row.objective == OFFLINE else "online"
        policies = ", ".join(_toml_str(p.token()) for p in row.policies)
        parts.append(
            "[[row]]\n"
            f"problem = {_toml_str(problem_token(row.problem))}\n"
            f"prior = {_toml_str(prior_token(row.prior))}\n"
            f"budget = {row.budget_ratio!r}\n"
            f"belief = {_toml_str(belief)}\n"
            f"objective = {_toml_str(objective)}\n"
            f"policies = [{policies}]\n"
        )
    return "\n".join(parts)


def select_rows(rows: list[ConfigRow], selector: str | None) -> list[tuple[int, ConfigRow]]:
    """Apply a 1-indexed row selector like ``2`` or ``1,3`` or ``2-4``."""
    numbered = list(enumerate(rows, start=1))
    if selector is None:
        return numbered
    wanted: list[int] = []
    for part in selector.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo_s, _, hi_s = part.partition("-")
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise ConfigError(f"bad row selector {selector!r}") from None
            wanted.extend(range(lo, hi + 1))
        else:
            try:
                wanted.append(int(part))
            except ValueError:
                raise ConfigError(f"bad row selector {selector!r}") from None
    out = []
    for idx in wanted:
        if not 1 <= idx <= len(rows):
            raise ConfigError(f"row selector {idx} out of range (1..{len(rows)})")
        out.append((idx, rows[idx - 1]))
    return out
