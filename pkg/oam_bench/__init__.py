# oam-bench - tunable beam splitter and host-bench simulator
