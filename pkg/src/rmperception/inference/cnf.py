"""CNF formulas and DIMACS serialisation."""
from dataclasses import dataclass, field

from ..exceptions import ValidationError


@dataclass
class CnfFormula:
    variable_count: int = 0
    clauses: list = field(default_factory=list)

    def __post_init__(self):
        if self.variable_count < 0:
            raise ValidationError("variable_count must be non-negative")
        self.validate()

    @classmethod
    def trusted(cls, variable_count, clauses):
        """Build without the literal range check (for generated encodings)."""
        formula = cls.__new__(cls)
        formula.variable_count = variable_count
        formula.clauses = clauses
        return formula

    def new_var(self):
        self.variable_count += 1
        return self.variable_count

    def add(self, clause):
        self.clauses.append(list(clause))

    def validate(self):
        n = self.variable_count
        for i, clause in enumerate(self.clauses):
            for lit in clause:
                if lit == 0 or abs(lit) > n:
                    raise ValidationError(f"clause {i} uses literal {lit} outside [1, {n}]")
        return self

    def satisfied_by(self, assignment):
        """``assignment[v]`` is the truth value of variable ``v`` (index 0 unused)."""
        return all(
            any(assignment[abs(l)] == (l > 0) for l in clause) for clause in self.clauses
        )

    def to_dimacs(self):
        lines = [f"p cnf {self.variable_count} {len(self.clauses)}"]
        lines += [" ".join(map(str, clause)) + " 0" for clause in self.clauses]
        return "\n".join(lines) + "\n"


def parse_dimacs(text):
    formula = None
    current = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValidationError(f"line {lineno}: malformed problem line")
            formula = CnfFormula(int(parts[2]))
            continue
        if formula is None:
            raise ValidationError(f"line {lineno}: clause before problem line")
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                formula.clauses.append(current)
                current = []
            else:
                current.append(lit)
    if formula is None:
        raise ValidationError("missing 'p cnf' problem line")
    if current:
        formula.clauses.append(current)
    return formula.validate()
