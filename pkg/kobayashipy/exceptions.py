#!/usr/bin/env python
# -*-coding:utf-8 -*-

# error hierarchy shared by every module


class KobayashiError(Exception):
    """Base class of all errors raised by kobayashipy."""


class ConstructionError(KobayashiError):
    """The parameter table or the quadrature could not be built."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index

    def __str__(self):
        msg = super().__str__()
        if self.index is None:
            return msg
        return "n={}: {}".format(self.index, msg)


class DomainError(ConstructionError):
    """An argument lies outside the range where a recursion is defined."""


class NoRoot(ConstructionError):
    """The defining equation of b_n has no positive root: a_n is too small."""


class UnderflowError(ConstructionError):
    """A sequence term rounded to zero at the working precision."""


class QuadratureError(ConstructionError):
    """The node table is too coarse or fails the reproduction suite."""


class GeometryError(KobayashiError):
    """Base class of errors raised near the cusp variety."""


class NotOnVariety(GeometryError):
    pass


class OutsideTube(GeometryError):
    pass


class InsideCore(GeometryError):
    pass


class NonPositiveCorrector(GeometryError):
    """The sampled Levi form of q is not positive on the shell A_n."""


class StencilError(KobayashiError):
    """A finite-difference stencil left the domain of the function."""


class EmptyRegion(KobayashiError):
    """The exclusion predicate removed every sample of a grid."""


class CertificationError(KobayashiError):
    pass


class NotParallel(CertificationError):
    pass


class CertRequired(CertificationError):
    pass


class ProfileError(CertificationError):
    """The profile could not be evaluated at a disc sample."""
