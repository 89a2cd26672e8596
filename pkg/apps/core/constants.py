# Panel CSV: required leading columns, then covariates
PANEL_KEY_COLUMNS = ('loan_id', 'period', 'state')

# Spell CSV: leading columns, then covariates
SPELL_KEY_COLUMNS = (
    'loan_id',
    'spell_num',
    'spell_num_binned',
    'entry',
    'stop',
    'status',
    'resolution',
    'spell_age',
    'period',
    'spell_period',
    'spell_entry',
    'spell_stop',
)

SPELL_INT_COLUMNS = SPELL_KEY_COLUMNS[1:]

# Stratum key used by techniques with a common baseline
COMMON_STRATUM = 0

LOAN_STATUS_STRATA = 'loan_status'

LOAN_STATUS_LABELS = {
    'PERF': 'active',
    'DEF': 'defaulted',
    'SET': 'settled',
    'WO': 'written_off',
}
