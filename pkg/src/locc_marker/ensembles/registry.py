"""Registry of named ensemble builders."""

from __future__ import annotations

import logging

from locc_marker.ensembles.base import Ensemble, EnsembleBuilder
from locc_marker.ensembles.mixed import SmolinBuilder, XbFromUpbBuilder, YuBuilder
from locc_marker.ensembles.qubit_pairs import (
    BellBuilder,
    DoubleSicAntiparallelBuilder,
    DoubleSicParallelBuilder,
    Duan4Builder,
    PwTrineBuilder,
    SicQubitBuilder,
)
from locc_marker.ensembles.qutrit import Bennett9Builder, UpbTilesBuilder
from locc_marker.errors import UnknownEnsembleError

logger = logging.getLogger(__name__)


class EnsembleRegistry:
    """Registry for named ensemble builders.

    Lookup is by exact builder id; registration order is the listing order.
    """

    def __init__(self) -> None:
        self._builders: dict[str, EnsembleBuilder] = {}

    def register(self, builder: EnsembleBuilder) -> None:
        """Register a builder instance."""
        self._builders[builder.builder_id] = builder
        logger.debug(f"Registered ensemble builder: {builder.builder_id} ({builder.description})")

    def get(self, name: str) -> EnsembleBuilder:
        """Find the builder registered under ``name``.

        Raises:
            UnknownEnsembleError: if nothing is registered under that name
        """
        try:
            return self._builders[name]
        except KeyError:
            known = ", ".join(self._builders)
            raise UnknownEnsembleError(f"Unknown ensemble '{name}' (known: {known})") from None

    def build(self, name: str, **params: int | None) -> Ensemble:
        builder = self.get(name)
        ensemble = builder.build(builder.check_params(params))
        logger.debug(f"Built ensemble {ensemble.name} with {len(ensemble)} members")
        return ensemble

    def list_builders(self) -> list[EnsembleBuilder]:
        """Return list of all registered builders."""
        return list(self._builders.values())


# Global registry instance
_registry: EnsembleRegistry | None = None


def get_registry() -> EnsembleRegistry:
    """Get the global ensemble registry, creating it if needed."""
    global _registry
    if _registry is None:
        _registry = EnsembleRegistry()
        _registry.register(BellBuilder())
        _registry.register(Bennett9Builder())
        _registry.register(PwTrineBuilder())
        _registry.register(SicQubitBuilder())
        _registry.register(DoubleSicParallelBuilder())
        _registry.register(DoubleSicAntiparallelBuilder())
        _registry.register(Duan4Builder())
        _registry.register(YuBuilder())
        _registry.register(UpbTilesBuilder())
        _registry.register(XbFromUpbBuilder())
        _registry.register(SmolinBuilder())
        logger.info(f"Initialized ensemble registry with {len(_registry._builders)} builders")
    return _registry


def build_named(name: str, **params: int | None) -> Ensemble:
    """Build a registered ensemble, e.g. ``build_named("yu", d=3)``."""
    return get_registry().build(name, **params)
