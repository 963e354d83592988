from hypkg.cli import main

main()
