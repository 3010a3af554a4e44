"""
Code vocabulary and measurement definitions used by the synthetic cohort.

Diagnoses are generated as ICD-9 codes and drugs as NDC codes, so the ETL code
mapping step has real work to do. Every common code and every long-tail code has a
mapping; the junk codes in ``UNMAPPED_CODES`` deliberately have none.
"""

from typing import Dict, List

import pandas as pd

# ICD-9 -> ICD-10 with the fraction of patients carrying the condition
DIAGNOSES = [
    {"icd9": "414.8", "icd10": "I25.5", "description": "Ischemic cardiomyopathy", "prevalence": 0.18},
    {"icd9": "425.4", "icd10": "I42.8", "description": "Other cardiomyopathies", "prevalence": 0.12},
    {"icd9": "425.9", "icd10": "I42.9", "description": "Cardiomyopathy, unspecified", "prevalence": 0.12},
    {"icd9": "401.9", "icd10": "I10", "description": "Essential hypertension", "prevalence": 0.55},
    {"icd9": "250.00", "icd10": "E11.9", "description": "Type 2 diabetes without complications", "prevalence": 0.30},
    {"icd9": "427.31", "icd10": "I48.91", "description": "Atrial fibrillation", "prevalence": 0.30},
    {"icd9": "585.3", "icd10": "N18.3", "description": "Chronic kidney disease, stage 3", "prevalence": 0.20},
    {"icd9": "428.0", "icd10": "I50.9", "description": "Heart failure, unspecified", "prevalence": 0.60},
    {"icd9": "496", "icd10": "J44.9", "description": "Chronic obstructive pulmonary disease", "prevalence": 0.20},
    {"icd9": "272.4", "icd10": "E78.5", "description": "Hyperlipidemia", "prevalence": 0.45},
]

# ATC level-4 classes, each dispensed under two NDC package codes
DRUGS = [
    {"atc": "C03CA", "description": "Sulfonamide diuretics", "ndc": ["00054-4297-25", "00378-0208-01"], "prevalence": 0.50},
    {"atc": "C07AB", "description": "Selective beta blockers", "ndc": ["00093-0733-01", "00378-0018-01"], "prevalence": 0.45},
    {"atc": "C09AA", "description": "ACE inhibitors", "ndc": ["00093-1111-01", "68180-0513-01"], "prevalence": 0.40},
    {"atc": "C03DA", "description": "Aldosterone antagonists", "ndc": ["00025-1001-31", "00378-2146-01"], "prevalence": 0.25},
    {"atc": "B01AA", "description": "Vitamin K antagonists", "ndc": ["00056-0172-70", "00555-0831-02"], "prevalence": 0.20},
    {"atc": "C10AA", "description": "HMG CoA reductase inhibitors", "ndc": ["00006-0740-31", "00093-7153-98"], "prevalence": 0.45},
    {"atc": "A10BA", "description": "Biguanides", "ndc": ["00087-6060-05", "00093-1048-01"], "prevalence": 0.25},
    {"atc": "C07AG", "description": "Alpha and beta blocking agents", "ndc": ["00007-4139-20", "00093-0751-01"], "prevalence": 0.20},
    {"atc": "C01AA", "description": "Digitalis glycosides", "ndc": ["00173-0242-55", "00115-9811-01"], "prevalence": 0.10},
]

VITALS = [
    {"name": "SYSTOLIC_BP", "mean": 128.0, "sd": 18.0, "decimals": 0},
    {"name": "DIASTOLIC_BP", "mean": 74.0, "sd": 11.0, "decimals": 0},
    {"name": "PULSE", "mean": 76.0, "sd": 13.0, "decimals": 0},
    {"name": "BMI", "mean": 29.0, "sd": 6.0, "decimals": 1},
]

LABS = [
    {"name": "SODIUM", "mean": 139.0, "sd": 3.5, "decimals": 0},
    {"name": "POTASSIUM", "mean": 4.3, "sd": 0.5, "decimals": 1},
    {"name": "CREATININE", "mean": 1.2, "sd": 0.4, "decimals": 2},
    {"name": "HEMOGLOBIN", "mean": 12.8, "sd": 1.8, "decimals": 1},
    {"name": "BNP", "mean": 450.0, "sd": 300.0, "decimals": 0},
]

# Order results: 0/1 findings carry a prevalence, graded results a distribution
ORDERS = [
    {"name": "MITRAL_REGURGITATION", "binary": True, "prevalence": 0.25},
    {"name": "LV_HYPERTROPHY", "binary": True, "prevalence": 0.30},
    {"name": "QTC_INTERVAL", "binary": False, "mean": 440.0, "sd": 30.0, "decimals": 0},
]

AGE = {"mean": 70.0, "sd": 12.0, "min": 18.0, "max": 100.0}

RARE_POOL_SIZE = 500
RARE_ICD9 = [f"V{10 + i}.{i % 10}" for i in range(RARE_POOL_SIZE)]
RARE_ICD10 = [f"Z{10 + i}.{i % 10}" for i in range(RARE_POOL_SIZE)]
RARE_NDC = [f"99999-{i:04d}-01" for i in range(RARE_POOL_SIZE)]
RARE_ATC = [f"V03AX{i:02d}" for i in range(RARE_POOL_SIZE)]

UNMAPPED_CODES = {"drug": "00000-0000-00", "diagnosis": "799.9X"}


def ndc_to_atc_table() -> pd.DataFrame:
    """Exact NDC -> ATC lookup covering the common and long-tail drug codes."""
    rows = [(ndc, drug["atc"]) for drug in DRUGS for ndc in drug["ndc"]]
    rows += list(zip(RARE_NDC, RARE_ATC))
    return pd.DataFrame(rows, columns=["ndc", "atc"])


def icd9_to_icd10_table() -> pd.DataFrame:
    """Exact ICD-9 -> ICD-10 lookup covering the common and long-tail diagnoses."""
    rows = [(dx["icd9"], dx["icd10"]) for dx in DIAGNOSES]
    rows += list(zip(RARE_ICD9, RARE_ICD10))
    return pd.DataFrame(rows, columns=["icd9", "icd10"])


def latent_feature_names() -> List[str]:
    """Feature names whose ground-truth value the generator records per echo."""
    names = ["DEMO_GENDER", "DEMO_AGE"]
    names += [f"VL_{v['name']}" for v in VITALS]
    names += [f"LB_{lab['name']}" for lab in LABS]
    names += [f"OR_{o['name']}" for o in ORDERS]
    names += [f"DI_{dx['icd10'].replace('.', '')}" for dx in DIAGNOSES]
    names += [f"MD_{drug['atc']}" for drug in DRUGS]
    return names


# Problem-list and fill/order features share the latent of the diagnosis / dispensing feature
LATENT_ALIASES: Dict[str, str] = {"PL": "DI", "MF": "MD", "MO": "MD"}


def latent_of(feature_name: str) -> str:
    """Truth column that drives ``feature_name``; raises KeyError if there is none."""
    prefix, _, rest = feature_name.partition("_")
    name = f"{LATENT_ALIASES.get(prefix, prefix)}_{rest}"
    if name not in latent_feature_names():
        raise KeyError(feature_name)
    return name


def population_moments(latent: str):
    """Population mean and standard deviation of a latent covariate."""
    prefix, _, rest = latent.partition("_")
    if latent == "DEMO_GENDER":
        return 0.5, 0.5
    if latent == "DEMO_AGE":
        return AGE["mean"], AGE["sd"]
    if prefix in ("VL", "LB"):
        item = next(x for x in (VITALS if prefix == "VL" else LABS) if x["name"] == rest)
        return item["mean"], item["sd"]
    if prefix == "OR":
        item = next(x for x in ORDERS if x["name"] == rest)
        if item["binary"]:
            p = item["prevalence"]
            return p, (p * (1.0 - p)) ** 0.5
        return item["mean"], item["sd"]
    if prefix == "DI":
        p = next(dx["prevalence"] for dx in DIAGNOSES if dx["icd10"].replace(".", "") == rest)
    else:
        p = next(d["prevalence"] for d in DRUGS if d["atc"] == rest)
    return p, (p * (1.0 - p)) ** 0.5
