from ._criteria import *
