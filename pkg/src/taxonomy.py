"""Ability taxonomies: static two-branch trees of fine-grained dimensions"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from src.config import DATA_DIR
from src.errors import DataValidationError
from src.matrices import QMatrix

logger = logging.getLogger(__name__)

BRANCHES = ("knowledge", "cognitive")
BUILTIN_DOMAINS = ("math", "physics", "chemistry", "computer_science")


@dataclass(frozen=True)
class AbilityDimension:
    id: str
    name: str
    branch: str
    description: str = ""
    parent: str | None = None


@dataclass(frozen=True)
class AbilityTaxonomy:
    domain: str
    dimensions: tuple[AbilityDimension, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for dim in self.dimensions:
            if dim.branch not in BRANCHES:
                raise DataValidationError(f"dimension {dim.id}: unknown branch '{dim.branch}'")
            if dim.id in index:
                raise DataValidationError(f"duplicate taxonomy dimension id: {dim.id}")
            index[dim.id] = dim
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.dimensions)

    def __contains__(self, ability_id: str) -> bool:
        return ability_id in self._index

    def get(self, ability_id: str) -> AbilityDimension:
        return self._index[ability_id]

    def branch_ids(self, branch: str) -> list[str]:
        return [d.id for d in self.dimensions if d.branch == branch]


def _walk(node: dict, branch: str, parent: str | None, out: list[AbilityDimension]) -> None:
    for key, value in node.items():
        if not isinstance(value, dict):
            raise DataValidationError(f"taxonomy node '{key}' must be an object")
        if "name" in value:
            out.append(
                AbilityDimension(
                    id=key,
                    name=str(value["name"]),
                    branch=branch,
                    description=str(value.get("description", "")),
                    parent=parent,
                )
            )
        else:
            _walk(value, branch, key, out)


def load_taxonomy(path) -> AbilityTaxonomy:
    """Load a taxonomy tree: {"domain": ..., "knowledge": {...}, "cognitive": {...}}"""
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"file not found: {path}")
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataValidationError(f"{path}: invalid taxonomy JSON ({e})") from e

    dimensions: list[AbilityDimension] = []
    for branch in BRANCHES:
        _walk(tree.get(branch, {}), branch, None, dimensions)
    if not dimensions:
        raise DataValidationError(f"{path}: taxonomy has no dimensions")

    taxonomy = AbilityTaxonomy(tree.get("domain", path.stem), tuple(dimensions))
    logger.info("Loaded taxonomy %s: %d dimensions", taxonomy.domain, len(taxonomy))
    return taxonomy


def builtin_taxonomy(domain: str) -> AbilityTaxonomy:
    if domain not in BUILTIN_DOMAINS:
        raise DataValidationError(
            f"unknown taxonomy '{domain}'; choose from {', '.join(BUILTIN_DOMAINS)}"
        )
    return load_taxonomy(DATA_DIR / "taxonomies" / f"{domain}.json")


def check_taxonomy(q: QMatrix, taxonomy: AbilityTaxonomy) -> None:
    """Every Q-matrix ability id must resolve to a taxonomy dimension"""
    missing = [a for a in q.ability_ids if a not in taxonomy]
    if missing:
        raise DataValidationError(
            f"ability id(s) not in taxonomy '{taxonomy.domain}': {', '.join(missing)}"
        )
