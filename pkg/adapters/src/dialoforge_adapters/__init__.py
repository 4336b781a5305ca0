"""Optional neural NLU/NLG component server for the dialoforge wire protocol."""
