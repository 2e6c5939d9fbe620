from typing import Any, Callable, Sequence
from datetime import datetime as dt
import argparse, json, math, time, traceback as tb
import pandas as pd
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.special import erf
from scipy.integrate import trapezoid
from pydantic import ValidationError
