#!/usr/bin/env python3
# -*- coding: utf-8 -*-

__version__ = "0.1.0"

from kobayashipy.utils import ScaledReal, utils
from kobayashipy.Params import ParamTable, Params
from kobayashipy.Profile import MollifierKernel, Profile, TailInterval
from kobayashipy.Levi import GridSpec, Levi, LeviReport
from kobayashipy.Cusp import Cusp, CuspGeometry, PshSummand
from kobayashipy.Discs import DiscCert, DiscMap, Discs, DomainSpec, KobayashiBound
from kobayashipy.Lab import Lab, RunConfig, RunReport

__all__ = ['ScaledReal', 'utils', 'Params', 'ParamTable', 'Profile', 'MollifierKernel', 'TailInterval',
           'Levi', 'GridSpec', 'LeviReport', 'Cusp', 'CuspGeometry', 'PshSummand', 'Discs', 'DomainSpec',
           'DiscMap', 'DiscCert', 'KobayashiBound', 'Lab', 'RunConfig', 'RunReport']
