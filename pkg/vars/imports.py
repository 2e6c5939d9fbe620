import os
import numpy as np
import scipy.sparse as sp
from enum import Enum
from typing import TypedDict, Literal, Any
from dataclasses import dataclass, field, replace
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator
