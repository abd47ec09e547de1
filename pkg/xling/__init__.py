# xling package init
