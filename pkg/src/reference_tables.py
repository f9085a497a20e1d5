"""Published sparsity counts used to annotate reports."""
from pathlib import Path
from typing import Dict, List, Optional

import yaml
from pydantic import BaseModel, ValidationError, field_validator, model_validator

# Note: Avoiding logger import here to keep this loader usable from config checks


class SparsityRow(BaseModel):
    """Additional zeros for one decay rate."""
    lambda_: float
    additional_real_zero: int
    additional_imag_zero: int

    @field_validator('lambda_')
    def validate_lambda(cls, v):
        if v < 0:
            raise ValueError("lambda must be non-negative")
        return v

    @field_validator('additional_real_zero', 'additional_imag_zero')
    def validate_count(cls, v):
        if v < 0:
            raise ValueError("counts must be non-negative")
        return v


class ReferenceTables(BaseModel):
    """Sparsity reference for one (p_max, k_max) geometry at level 0."""
    p_max: int
    k_max: int
    total: int
    admissible_real: int
    admissible_imag: int
    laplace_real: int
    laplace_imag: int
    rows: List[SparsityRow] = []

    @model_validator(mode='after')
    def validate_consistency(self):
        """Check that every count fits inside the admissible pattern."""
        errors = []
        if self.admissible_real + self.admissible_imag > self.total:
            errors.append("admissible counts exceed total slots")
        if self.laplace_real > self.admissible_real or self.laplace_imag > self.admissible_imag:
            errors.append("lambda=0 counts exceed admissible counts")
        seen = set()
        for row in self.rows:
            if row.lambda_ in seen:
                errors.append(f"duplicate row for lambda={row.lambda_}")
            seen.add(row.lambda_)
            if row.additional_real_zero > self.admissible_real or row.additional_imag_zero > self.admissible_imag:
                errors.append(f"row lambda={row.lambda_} exceeds admissible counts")

        # If there are any errors, raise them all at once
        if errors:
            raise ValueError("\n".join(errors))
        return self

    def matches(self, p_max: int, k_max: int, level: int = 0) -> bool:
        return level == 0 and p_max == self.p_max and k_max == self.k_max

    def row_for(self, lambda_: float) -> Optional[SparsityRow]:
        for row in self.rows:
            if row.lambda_ == lambda_:
                return row
        return None


def load_reference_tables(config_file: Path) -> ReferenceTables:
    """Load reference tables from a YAML file."""
    config_file = Path(config_file)
    try:
        if not config_file.exists():
            raise FileNotFoundError(f"Reference tables file not found: {config_file}")

        with open(config_file, 'r') as f:
            data = yaml.safe_load(f)

        if not data:
            raise ValueError("Reference tables file is empty")

        if not isinstance(data, dict):
            raise ValueError("Reference tables must be a mapping")

        if 'sparsity' not in data:
            raise ValueError("Reference tables must contain a 'sparsity' section")

        section = dict(data['sparsity'])
        rows: List[Dict] = []
        for lam, counts in (section.pop('additional_zeros', None) or {}).items():
            rows.append({
                'lambda_': float(lam),
                'additional_real_zero': counts.get('real'),
                'additional_imag_zero': counts.get('imag'),
            })
        return ReferenceTables(rows=rows, **section)

    except yaml.YAMLError as e:
        raise ValueError(f"Invalid YAML format in {config_file}: {e}")
    except ValidationError as e:
        raise ValueError(f"Invalid reference tables in {config_file}: {e}")
    except (AttributeError, TypeError) as e:
        raise ValueError(f"Invalid reference tables in {config_file}: {e}")
