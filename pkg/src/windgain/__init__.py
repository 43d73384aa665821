"""Power-gain quantification of a turbine upgrade from side-by-side SCADA data.

Kernel regression models of a test turbine (REF) and a baseline control
turbine (CTR-b), driven by covariates measured at a neutral control turbine
(CTR-n), are compared before and after the upgrade.
"""

__version__ = "0.1.0"
